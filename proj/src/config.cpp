#include "oscda/experiments.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace oscda {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double strict_double(const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigError("not a number: '" + text + "'");
    return v;
}

std::vector<double> number_list(const std::string& value) {
    std::vector<double> out;
    for (const auto& item : split(value, ',')) out.push_back(parse_number(item));
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

int parse_int(const std::string& value) {
    const std::string t = trim(value);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigError("not an integer: '" + value + "'");
    return v;
}

bool parse_bool(const std::string& value) {
    const std::string t = trim(value);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("not a boolean: '" + value + "'");
}

std::string list_string(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v[i]);
    }
    return out;
}

template <class E>
E parse_enum(const std::string& value, const std::vector<std::pair<std::string, E>>& table) {
    const std::string t = trim(value);
    for (const auto& [name, e] : table)
        if (name == t) return e;
    std::string allowed;
    for (const auto& [name, e] : table) allowed += (allowed.empty() ? "" : "|") + name;
    throw ConfigError("expected one of " + allowed + ", got '" + value + "'");
}

template <class E>
std::string enum_name(E e, const std::vector<std::pair<std::string, E>>& table) {
    for (const auto& [name, v] : table)
        if (v == e) return name;
    return "?";
}

const std::vector<std::pair<std::string, Scenario>> kScenarios{{"A", Scenario::A},
                                                               {"B", Scenario::B}};
const std::vector<std::pair<std::string, BalancingMethod>> kBalancing{
    {"none", BalancingMethod::none},
    {"penalty", BalancingMethod::penalty},
    {"pseudo_obs", BalancingMethod::pseudo_obs},
    {"blending", BalancingMethod::blending}};
const std::vector<std::pair<std::string, InitialBalance>> kInitialBalance{
    {"full", InitialBalance::full},
    {"positions", InitialBalance::positions},
    {"none", InitialBalance::none}};
const std::vector<std::pair<std::string, MetricsStage>> kStages{
    {"forecast", MetricsStage::forecast}, {"analysis", MetricsStage::analysis}};
const std::vector<std::pair<std::string, AnalysisFilter>> kFilters{
    {"esrf", AnalysisFilter::esrf}, {"enkf", AnalysisFilter::enkf}};
const std::vector<std::pair<std::string, FreeIntegrator>> kIntegrators{
    {"verlet", FreeIntegrator::verlet},
    {"langevin", FreeIntegrator::langevin},
    {"rattle", FreeIntegrator::rattle},
    {"tangential", FreeIntegrator::tangential}};
const std::vector<std::pair<std::string, BlendRamp>> kRamps{{"linear", BlendRamp::linear},
                                                            {"cosine", BlendRamp::cosine}};

struct KeySpec {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define OSCDA_NUMBER(name)                                                                  \
    KeySpec {                                                                               \
        #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_number(v); }, \
            [](const ExperimentConfig& c) { return format_double(c.name); }                 \
    }
#define OSCDA_INT(name)                                                                  \
    KeySpec {                                                                            \
        #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_int(v); }, \
            [](const ExperimentConfig& c) { return std::to_string(c.name); }             \
    }
#define OSCDA_BOOL(name)                                                                  \
    KeySpec {                                                                             \
        #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_bool(v); }, \
            [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); } \
    }
#define OSCDA_LIST(name)                                                                   \
    KeySpec {                                                                              \
        #name, [](ExperimentConfig& c, const std::string& v) { c.name = number_list(v); }, \
            [](const ExperimentConfig& c) { return list_string(c.name); }                  \
    }
#define OSCDA_ENUM(name, table)                                                           \
    KeySpec {                                                                             \
        #name,                                                                            \
            [](ExperimentConfig& c, const std::string& v) { c.name = parse_enum(v, table); }, \
            [](const ExperimentConfig& c) { return enum_name(c.name, table); }            \
    }

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs{
        KeySpec{"model", [](ExperimentConfig& c, const std::string& v) { c.model = trim(v); },
                [](const ExperimentConfig& c) { return c.model; }},
        OSCDA_NUMBER(epsilon),
        OSCDA_LIST(force_constants),
        OSCDA_NUMBER(gravity),
        OSCDA_LIST(rest_lengths),
        OSCDA_NUMBER(ellipse_axis),
        OSCDA_LIST(potential_gradient),
        OSCDA_NUMBER(friction),
        OSCDA_NUMBER(kbt),
        OSCDA_NUMBER(dt),
        OSCDA_INT(ensemble_size),
        KeySpec{"observed",
                [](ExperimentConfig& c, const std::string& v) { c.observed = trim(v); },
                [](const ExperimentConfig& c) { return c.observed; }},
        OSCDA_NUMBER(obs_interval),
        OSCDA_NUMBER(obs_variance),
        OSCDA_NUMBER(initial_variance),
        OSCDA_NUMBER(inflation),
        OSCDA_NUMBER(total_time),
        OSCDA_ENUM(scenario, kScenarios),
        OSCDA_ENUM(filter, kFilters),
        OSCDA_ENUM(balancing, kBalancing),
        OSCDA_NUMBER(penalty_weight),
        OSCDA_BOOL(penalty_soft_constraint),
        OSCDA_BOOL(penalty_project_momentum),
        OSCDA_NUMBER(penalty_newton_tol),
        OSCDA_INT(penalty_newton_max_iter),
        OSCDA_INT(blend_window),
        OSCDA_ENUM(blend_ramp, kRamps),
        KeySpec{"seed",
                [](ExperimentConfig& c, const std::string& v) {
                    const std::string t = trim(v);
                    std::uint64_t s = 0;
                    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), s);
                    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
                        throw ConfigError("not an unsigned integer: '" + v + "'");
                    c.seed = s;
                },
                [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        OSCDA_LIST(initial_q),
        OSCDA_LIST(initial_p),
        OSCDA_ENUM(initial_balance, kInitialBalance),
        OSCDA_NUMBER(normal_impulse),
        OSCDA_NUMBER(burn_in),
        OSCDA_ENUM(metrics_stage, kStages),
        OSCDA_ENUM(integrator, kIntegrators),
        OSCDA_INT(record_every),
    };
    return specs;
}

#undef OSCDA_NUMBER
#undef OSCDA_INT
#undef OSCDA_BOOL
#undef OSCDA_LIST
#undef OSCDA_ENUM

bool integral_ratio(double num, double den, int& out) {
    const double r = num / den;
    const double n = std::round(r);
    if (!(n >= 0.0) || std::abs(r - n) > 1e-9 * std::max(1.0, r)) return false;
    out = static_cast<int>(n);
    return true;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

double parse_number(const std::string& text) {
    const std::string t = trim(text);
    const auto caret = t.find('^');
    if (caret == std::string::npos) return strict_double(t);
    return std::pow(strict_double(t.substr(0, caret)), strict_double(t.substr(caret + 1)));
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& s : key_specs()) k.push_back(s.key);
        return k;
    }();
    return keys;
}

void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& spec : key_specs()) {
        if (spec.key != key) continue;
        try {
            spec.set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError("key '" + key + "': " + e.what());
        }
        return;
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        try {
            set_config_key(cfg, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_key_values() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& spec : key_specs()) out.emplace_back(spec.key, spec.get(*this));
    return out;
}

int ExperimentConfig::steps_per_observation() const {
    int n = 0;
    if (!integral_ratio(obs_interval, dt, n) || n < 1)
        throw ConfigError("obs_interval must be a positive integer multiple of dt");
    return n;
}

int ExperimentConfig::n_cycles() const {
    int n = 0;
    if (!integral_ratio(total_time, obs_interval, n))
        throw ConfigError("total_time must be an integer multiple of obs_interval");
    return n;
}

void ExperimentConfig::validate() const {
    if (model != "double_pendulum" && model != "elliptic_pendulum")
        throw ConfigError("model must be double_pendulum or elliptic_pendulum");
    const std::size_t n_dof = model == "double_pendulum" ? 4 : 2;
    const std::size_t n_con = model == "double_pendulum" ? 2 : 1;
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (force_constants.size() != n_con)
        throw ConfigError("force_constants needs " + std::to_string(n_con) + " entries");
    for (double k : force_constants)
        if (!(k > 0.0)) throw ConfigError("force_constants must be positive");
    if (model == "double_pendulum" && rest_lengths.size() != 2)
        throw ConfigError("rest_lengths needs 2 entries");
    if (model == "elliptic_pendulum") {
        if (!(ellipse_axis > 0.0)) throw ConfigError("ellipse_axis must be positive");
        if (potential_gradient.size() != 2) throw ConfigError("potential_gradient needs 2 entries");
    }
    if (friction < 0.0 || kbt < 0.0) throw ConfigError("friction and kbt must be non-negative");
    if (scenario == Scenario::B && !(kbt > 0.0))
        throw ConfigError("scenario B needs a positive kbt");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (ensemble_size < 2) throw ConfigError("ensemble_size must be at least 2");
    if (observed != "q" && observed != "p") throw ConfigError("observed must be q or p");
    if (!(obs_interval > 0.0)) throw ConfigError("obs_interval must be positive");
    if (obs_variance < 0.0) throw ConfigError("obs_variance must be non-negative");
    if (initial_variance < 0.0) throw ConfigError("initial_variance must be non-negative");
    if (!(inflation > 0.0)) throw ConfigError("inflation must be positive");
    if (total_time < 0.0) throw ConfigError("total_time must be non-negative");
    const int eta = steps_per_observation();
    n_cycles();
    if (!(penalty_weight >= 0.0)) throw ConfigError("penalty_weight must be non-negative");
    if (penalty_newton_max_iter < 1) throw ConfigError("penalty_newton_max_iter must be >= 1");
    if (balancing == BalancingMethod::blending && (blend_window < 2 || blend_window > eta))
        throw ConfigError("blend_window must lie in [2, obs_interval/dt]");
    if (balancing == BalancingMethod::pseudo_obs && !(kbt > 0.0))
        throw ConfigError("pseudo_obs balancing needs a positive kbt");
    if (initial_q.size() != n_dof || initial_p.size() != n_dof)
        throw ConfigError("initial_q and initial_p need " + std::to_string(n_dof) + " entries");
    if (record_every < 1) throw ConfigError("record_every must be >= 1");
}

}  // namespace oscda
