#include "oscda/experiments.hpp"
#include "oscda/stability.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace oscda;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string config;
    std::string out;
    bool force = false;
    int threads = 1;
    std::vector<std::string> overrides;
};

void prepare_output(const fs::path& dir, bool force) {
    fs::create_directories(dir);
    if (fs::exists(dir / "metadata.json") && !force)
        throw Error(dir.string() + " already holds metadata.json; pass --force to overwrite");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg =
        args.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(args.config);
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        set_config_key(cfg, trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(parse_number(item));
    if (values.empty()) throw ConfigError("--values is empty");
    return values;
}

std::string command_line(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
    return v;
}

void write_comparison(std::ostream& out, const std::string& variant, double alpha,
                      const Eigen::MatrixXd& extracted, const Eigen::MatrixXd& closed) {
    const MatrixComparison c = compare_matrices(extracted, closed);
    for (int i = 0; i < extracted.rows(); ++i)
        for (int j = 0; j < extracted.cols(); ++j)
            out << variant << ',' << format_double(alpha) << ',' << i + 1 << ',' << j + 1 << ','
                << format_double(extracted(i, j)) << ',' << format_double(closed(i, j)) << ','
                << format_double(c.deviation(i, j)) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stiff Hamiltonian ensemble data assimilation experiments"};
    app.require_subcommand(1, 1);

    CommonArgs common;
    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", common.config, "configuration file");
        if (needs_config) opt->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory")->required();
        sub->add_flag("--force", common.force, "overwrite existing outputs");
        sub->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--set", common.overrides, "override a configuration key (key=value)");
    };

    auto* simulate = app.add_subcommand("simulate", "free dynamics of the configured model");
    add_common(simulate, true);

    auto* assimilate = app.add_subcommand("assimilate", "twin experiment");
    add_common(assimilate, true);

    auto* sweep_cmd = app.add_subcommand("sweep", "twin experiments over a parameter list");
    add_common(sweep_cmd, true);
    std::string sweep_param;
    std::string sweep_values;
    sweep_cmd->add_option("--param", sweep_param, "lambda | window")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma separated values")->required();

    auto* stability = app.add_subcommand("stability", "spectra of the blended linear maps");
    stability->set_help_flag("--help", "print this help message and exit");
    std::string st_model = "ho";
    std::optional<double> st_kh2;
    double st_K = 1e8;
    double st_h = 1e-4;
    double st_kh2_max = 4.0;
    int st_kh2_steps = 100;
    int st_alpha_steps = 101;
    stability->add_option("--model", st_model, "ho | coupled");
    stability->add_option("--Kh2", st_kh2, "single K h^2 value (ho)");
    stability->add_option("--K", st_K, "stiffness (coupled)");
    stability->add_option("--h", st_h, "step size (coupled)");
    stability->add_option("--kh2-max", st_kh2_max, "upper end of the K h^2 grid (ho)");
    stability->add_option("--kh2-steps", st_kh2_steps, "K h^2 grid points (ho)");
    stability->add_option("--alpha-steps", st_alpha_steps, "alpha grid points");
    stability->add_option("--out", common.out, "output directory")->required();
    stability->add_flag("--force", common.force, "overwrite existing outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string cmd = command_line(argc, argv);
    try {
        const fs::path out = common.out;
        if (*simulate) {
            const ExperimentConfig cfg = load_config(common);
            prepare_output(out, common.force);
            write_trajectory_csv(out / "trajectory.csv", simulate_free(cfg));
            write_text(out / "metadata.json", metadata_json(cfg, cmd));
        } else if (*assimilate) {
            const ExperimentConfig cfg = load_config(common);
            prepare_output(out, common.force);
            RunOptions opts;
            opts.threads = common.threads;
            const TwinResult result = run_twin_experiment(cfg, opts);
            write_metrics_csv(out / "metrics.csv", result.metrics);
            const MetricsRecord avg = result.metrics.time_average();
            write_text(out / "metadata.json",
                       metadata_json(cfg, cmd,
                                     {{"avg_rmse_q", format_double(avg.rmse_q)},
                                      {"avg_rmse_p_tan", format_double(avg.rmse_p_tan)},
                                      {"avg_mean_Hosc", format_double(avg.mean_Hosc)},
                                      {"avg_mean_J", format_double(avg.mean_J)},
                                      {"newton_unconverged",
                                       std::to_string(result.newton_unconverged)}}));
            std::printf("rmse_q %.6g  rmse_p_tan %.6g  mean_Hosc %.6g  mean_J %.6g\n", avg.rmse_q,
                        avg.rmse_p_tan, avg.mean_Hosc, avg.mean_J);
        } else if (*sweep_cmd) {
            const ExperimentConfig cfg = load_config(common);
            const SweepParameter param = parse_sweep_parameter(sweep_param);
            const std::vector<double> values = parse_values(sweep_values);
            prepare_output(out, common.force);
            const SweepResult result = sweep(cfg, param, values, common.threads);
            write_sweep_csv(out / "sweep.csv", result);
            write_text(out / "metadata.json",
                       metadata_json(cfg, cmd, {{"sweep_parameter", sweep_param},
                                                {"sweep_values", sweep_values}}));
            for (const auto& row : result.rows)
                if (!row.error.empty())
                    std::fprintf(stderr, "value %s failed: %s\n", format_double(row.value).c_str(),
                                 row.error.c_str());
            if (!result.all_succeeded()) return 1;
        } else if (*stability) {
            if (st_model != "ho" && st_model != "coupled")
                throw UsageError("--model must be ho or coupled");
            if (st_alpha_steps < 2 || st_kh2_steps < 1) throw ConfigError("grid sizes too small");
            prepare_output(out, common.force);
            const std::vector<double> alphas = linspace(0.0, 1.0, st_alpha_steps);
            nlohmann::ordered_json meta;
            meta["command"] = cmd;
            meta["model"] = st_model;
            if (st_model == "ho") {
                const std::vector<double> kh2s =
                    st_kh2 ? std::vector<double>{*st_kh2}
                           : linspace(st_kh2_max / st_kh2_steps, st_kh2_max, st_kh2_steps);
                std::ofstream csv(out / "stability.csv");
                csv << "Kh2,alpha,abs_lambda1,abs_lambda2,d,regime,alpha_minus,alpha_plus\n";
                for (const auto& r : scan_harmonic(kh2s, alphas)) {
                    csv << format_double(r.kh2) << ',' << format_double(r.alpha) << ','
                        << format_double(r.abs_lambda1) << ',' << format_double(r.abs_lambda2)
                        << ',' << format_double(r.discriminant) << ',' << r.regime << ','
                        << format_double(r.alpha_minus) << ',' << format_double(r.alpha_plus)
                        << '\n';
                }
                std::ofstream cmp(out / "matrix_comparison.csv");
                cmp << "variant,alpha,row,col,extracted,closed_form,deviation\n";
                const double kh2 = kh2s.front();
                for (double a : {0.0, 0.5, 1.0}) {
                    const Eigen::MatrixXd A = harmonic_flow_matrix(kh2, 1.0, a);
                    write_comparison(cmp, "cubic_minus", a, A,
                                     closed_form_harmonic_flow_matrix(kh2, 1.0, a, -1.0));
                    write_comparison(cmp, "cubic_plus", a, A,
                                     closed_form_harmonic_flow_matrix(kh2, 1.0, a, +1.0));
                }
                meta["h"] = 1.0;
                meta["note"] = "K = Kh2 with h = 1; regime spiral means d < 0";
            } else {
                std::ofstream csv(out / "stability.csv");
                csv << "K,h,alpha,abs_lambda1,abs_lambda2,abs_lambda3,abs_lambda4\n";
                for (const auto& r : scan_coupled(st_K, st_h, alphas)) {
                    csv << format_double(st_K) << ',' << format_double(st_h) << ','
                        << format_double(r.alpha);
                    for (double l : r.abs_lambda) csv << ',' << format_double(l);
                    csv << '\n';
                }
                std::ofstream cmp(out / "matrix_comparison.csv");
                cmp << "variant,alpha,row,col,extracted,closed_form,deviation\n";
                for (double a : {0.0, 0.5, 1.0})
                    write_comparison(cmp, "expanded", a, coupled_flow_matrix(st_K, st_h, a),
                                     closed_form_coupled_flow_matrix(st_K, st_h, a));
                meta["K"] = st_K;
                meta["h"] = st_h;
            }
            write_text(out / "metadata.json", meta.dump(2) + "\n");
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
