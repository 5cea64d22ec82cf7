#include "oscda/experiments.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <optional>

namespace oscda {

namespace {

Vector to_vector(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

std::optional<LangevinParams> langevin_params(const ExperimentConfig& cfg) {
    if (!(cfg.kbt > 0.0)) return std::nullopt;
    return LangevinParams{cfg.friction, cfg.kbt};
}

enum StreamTag : std::uint64_t { truth = 1, observations = 2, initial = 3, forecast = 4, analysis = 5 };

/// One model step of the forecast/truth dynamics with blending weight alpha.
StateVector model_step(const StiffSystem& system, const ExperimentConfig& cfg,
                       const StateVector& z, double alpha, RandomStream& rng) {
    if (cfg.scenario == Scenario::B) {
        return alpha == 1.0 ? langevin_step(system, z, cfg.dt, rng)
                            : langevin_blended_step(system, z, cfg.dt, alpha, rng);
    }
    return alpha == 1.0 ? stormer_verlet_step(system, z, cfg.dt)
                        : blended_step(system, z, cfg.dt, alpha);
}

StateVector ensemble_mean_state(const Ensemble& ens) { return StateVector::unflatten(ens.mean()); }

MetricsRecord make_record(const StiffSystem& system, double time, const Ensemble& ens,
                          const StateVector& ref) {
    const StateVector mean = ensemble_mean_state(ens);
    const BalanceSummary b = ensemble_balance(system, ens);
    MetricsRecord r;
    r.time = time;
    r.rmse_q = rmse_positions(mean.q, ref.q);
    r.rmse_p_tan = rmse_tangential_momenta(system, mean, ref);
    r.mean_Hosc = b.mean_Hosc;
    r.mean_J = b.mean_J;
    r.mean_abs_g = b.mean_abs_g;
    r.mean_abs_gtilde = b.mean_abs_gtilde;
    return r;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

}  // namespace

SystemPtr make_system(const ExperimentConfig& cfg) {
    if (cfg.model == "double_pendulum") {
        if (cfg.kbt > 0.0)
            throw ConfigError("thermal embedding is only available for the elliptic pendulum");
        DoublePendulumParams p;
        p.l1 = cfg.rest_lengths.at(0);
        p.l2 = cfg.rest_lengths.at(1);
        p.gravity = cfg.gravity;
        p.k1 = cfg.force_constants.at(0);
        p.k2 = cfg.force_constants.at(1);
        p.epsilon = cfg.epsilon;
        return make_double_pendulum(p);
    }
    if (cfg.model == "elliptic_pendulum") {
        EllipticPendulumParams p;
        p.axis_ratio = cfg.ellipse_axis;
        p.epsilon = cfg.epsilon;
        p.force_constant = cfg.force_constants.at(0);
        p.potential_gradient = Eigen::Vector2d(cfg.potential_gradient.at(0),
                                               cfg.potential_gradient.at(1));
        p.langevin = langevin_params(cfg);
        return make_elliptic_pendulum(p);
    }
    throw ConfigError("unknown model '" + cfg.model + "'");
}

ObservationModel make_observation_model(const ExperimentConfig& cfg) {
    const Eigen::Index n = cfg.model == "double_pendulum" ? 4 : 2;
    return cfg.observed == "q" ? ObservationModel::positions(n, cfg.obs_variance, cfg.obs_interval)
                               : ObservationModel::momenta(n, cfg.obs_variance, cfg.obs_interval);
}

StateVector reference_initial_state(const ExperimentConfig& cfg, const StiffSystem& system) {
    const StateVector raw(to_vector(cfg.initial_q), to_vector(cfg.initial_p));
    if (cfg.scenario == Scenario::A) return balance_initial_state(system, raw, 1e-12);

    // On the slow manifold with a kick along the normal of the first constraint.
    const Vector q = project_to_manifold(system, raw.q, 1e-12);
    const Jacobian G = system.jacobian(q);
    Vector p = tangent_projector(system, q) * raw.p;
    const Vector normal = G.row(0).transpose() / G.row(0).norm();
    p += cfg.normal_impulse * normal;
    return StateVector(q, p);
}

ReferenceRun generate_reference(const ExperimentConfig& cfg) {
    cfg.validate();
    const SystemPtr system = make_system(cfg);
    const int eta = cfg.steps_per_observation();
    const int n = cfg.n_cycles();
    RandomStream rng(cfg.seed, StreamTag::truth);

    ReferenceRun ref;
    ref.times.reserve(static_cast<std::size_t>(n) + 1);
    ref.states.reserve(static_cast<std::size_t>(n) + 1);
    StateVector z = reference_initial_state(cfg, *system);
    ref.times.push_back(0.0);
    ref.states.push_back(z);
    for (int k = 1; k <= n; ++k) {
        for (int s = 0; s < eta; ++s) z = model_step(*system, cfg, z, 1.0, rng);
        if (!z.finite())
            throw Error("generate_reference: non-finite state at observation " + std::to_string(k));
        ref.times.push_back(k * cfg.obs_interval);
        ref.states.push_back(z);
    }
    return ref;
}

std::vector<Eigen::VectorXd> generate_observations(const ReferenceRun& reference,
                                                   const ObservationModel& obs,
                                                   RandomStream& rng) {
    if (obs.rho < 0.0) throw Error("generate_observations: negative noise variance");
    const double sd = std::sqrt(obs.rho);
    std::vector<Eigen::VectorXd> ys;
    ys.reserve(reference.states.size());
    Eigen::VectorXd xi(obs.obs_dim());
    for (const StateVector& z : reference.states) {
        rng.fill_gaussian(xi);
        ys.push_back(obs.H * z.flatten() + sd * xi);
    }
    return ys;
}

Ensemble initial_ensemble(const ExperimentConfig& cfg, const StiffSystem& system,
                          const StateVector& z0) {
    const double sd = std::sqrt(cfg.initial_variance);
    std::vector<StateVector> members;
    members.reserve(static_cast<std::size_t>(cfg.ensemble_size));
    for (int i = 0; i < cfg.ensemble_size; ++i) {
        RandomStream rng(cfg.seed, StreamTag::initial, 0, static_cast<std::uint64_t>(i));
        Vector dq(z0.dof()), dp(z0.dof());
        rng.fill_gaussian(dq);
        rng.fill_gaussian(dp);
        StateVector z(z0.q + sd * dq, z0.p + sd * dp);
        switch (cfg.initial_balance) {
            case InitialBalance::full:
                z = balance_initial_state(system, z, 1e-12);
                break;
            case InitialBalance::positions:
                z.q = project_to_manifold(system, z.q, 1e-12);
                break;
            case InitialBalance::none:
                break;
        }
        members.push_back(std::move(z));
    }
    return Ensemble::from_states(members);
}

TwinResult run_twin_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const SystemPtr system = make_system(cfg);
    const ObservationModel obs = make_observation_model(cfg);
    const int eta = cfg.steps_per_observation();
    const int n_cycles = cfg.n_cycles();
    const int M = cfg.ensemble_size;

    ReferenceRun own_reference;
    if (!options.reference) own_reference = generate_reference(cfg);
    const ReferenceRun& ref = options.reference ? *options.reference : own_reference;

    std::vector<Eigen::VectorXd> own_observations;
    if (!options.observations) {
        RandomStream obs_rng(cfg.seed, StreamTag::observations);
        own_observations = generate_observations(ref, obs, obs_rng);
    }
    const std::vector<Eigen::VectorXd>& ys =
        options.observations ? *options.observations : own_observations;
    if (ref.states.size() != static_cast<std::size_t>(n_cycles) + 1 || ys.size() != ref.states.size())
        throw Error("run_twin_experiment: reference/observations do not match the time grid");

    std::vector<RandomStream> member_rng;
    member_rng.reserve(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i)
        member_rng.emplace_back(cfg.seed, StreamTag::forecast,
                                static_cast<std::uint64_t>(options.run_index),
                                static_cast<std::uint64_t>(i));
    RandomStream analysis_rng(cfg.seed, StreamTag::analysis,
                              static_cast<std::uint64_t>(options.run_index));

    std::optional<BlendSchedule> schedule;
    if (cfg.balancing == BalancingMethod::blending)
        schedule = BlendSchedule::ramp(cfg.blend_window, eta, cfg.blend_ramp);

    PenaltyConfig penalty;
    penalty.weight = cfg.penalty_weight;
    penalty.use_soft_constraint = cfg.penalty_soft_constraint;
    penalty.project_momentum = cfg.penalty_project_momentum;
    penalty.newton_tol = cfg.penalty_newton_tol;
    penalty.newton_max_iter = cfg.penalty_newton_max_iter;

    TwinResult result;
    result.metrics.burn_in = cfg.burn_in;
    result.metrics.records.reserve(static_cast<std::size_t>(n_cycles));
    result.ensemble_mean.reserve(static_cast<std::size_t>(n_cycles));

    Ensemble ens = initial_ensemble(cfg, *system, ref.states.front());
    auto record = [&](int k) {
        result.metrics.records.push_back(make_record(*system, ref.times[static_cast<std::size_t>(k)],
                                                     ens, ref.states[static_cast<std::size_t>(k)]));
        result.ensemble_mean.push_back(ensemble_mean_state(ens));
    };

    for (int k = 1; k <= n_cycles; ++k) {
        try {
            parallel_for(M, options.threads, [&](int i) {
                StateVector z = ens.member(i);
                RandomStream& rng = member_rng[static_cast<std::size_t>(i)];
                for (int s = 0; s < eta; ++s)
                    z = model_step(*system, cfg, z, schedule ? schedule->weight(s) : 1.0, rng);
                if (!z.finite())
                    throw Error("member " + std::to_string(i) + " became non-finite in the forecast");
                ens.set_member(i, z);
            });
            if (cfg.metrics_stage == MetricsStage::forecast) record(k);

            const Eigen::VectorXd& y = ys[static_cast<std::size_t>(k)];
            ens = cfg.filter == AnalysisFilter::esrf
                      ? esrf_analysis(ens, obs, y)
                      : enkf_perturbed_analysis(ens, obs, y, analysis_rng);
            ens = inflate(ens, cfg.inflation);
            if (cfg.balancing == BalancingMethod::penalty) {
                int failures = 0;
                ens = penalty_balance(*system, ens, penalty, &failures);
                result.newton_unconverged += failures;
            } else if (cfg.balancing == BalancingMethod::pseudo_obs) {
                ens = pseudo_obs_balance(*system, ens, analysis_rng);
            }
            if (!ens.matrix().allFinite()) throw Error("analysis produced non-finite members");
            if (cfg.metrics_stage == MetricsStage::analysis) record(k);
        } catch (const std::exception& e) {
            throw Error("cycle " + std::to_string(k) + " (t = " +
                        format_double(k * cfg.obs_interval) + "): " + e.what());
        }
    }
    return result;
}

SweepParameter parse_sweep_parameter(const std::string& name) {
    if (name == "lambda") return SweepParameter::lambda;
    if (name == "window") return SweepParameter::window;
    throw ConfigError("sweep parameter must be lambda or window, got '" + name + "'");
}

bool SweepResult::all_succeeded() const {
    for (const auto& r : rows)
        if (!r.error.empty()) return false;
    return true;
}

SweepResult sweep(const ExperimentConfig& cfg, SweepParameter parameter,
                  const std::vector<double>& values, int threads) {
    cfg.validate();
    if (values.empty()) throw ConfigError("sweep: no values given");
    if (parameter == SweepParameter::lambda && cfg.balancing != BalancingMethod::penalty)
        throw ConfigError("a lambda sweep needs balancing = penalty");
    if (parameter == SweepParameter::window && cfg.balancing != BalancingMethod::blending)
        throw ConfigError("a window sweep needs balancing = blending");

    const ReferenceRun reference = generate_reference(cfg);
    RandomStream obs_rng(cfg.seed, StreamTag::observations);
    const std::vector<Eigen::VectorXd> observations =
        generate_observations(reference, make_observation_model(cfg), obs_rng);

    SweepResult result;
    result.parameter = parameter;
    for (std::size_t idx = 0; idx < values.size(); ++idx) {
        SweepRow row;
        row.value = values[idx];
        try {
            ExperimentConfig c = cfg;
            if (parameter == SweepParameter::lambda) {
                c.penalty_weight = values[idx];
            } else {
                const double w = std::round(values[idx]);
                if (w != values[idx]) throw ConfigError("window sizes must be integers");
                c.blend_window = static_cast<int>(w);
            }
            c.validate();
            RunOptions opts;
            opts.threads = threads;
            opts.run_index = static_cast<int>(idx);
            opts.reference = &reference;
            opts.observations = &observations;
            row.average = run_twin_experiment(c, opts).metrics.time_average();
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

std::vector<TrajectorySample> simulate_free(const ExperimentConfig& cfg) {
    cfg.validate();
    const SystemPtr system = make_system(cfg);
    const StiffSystem& sys = *system;
    const long steps = std::lround(cfg.total_time / cfg.dt);
    if (std::abs(steps * cfg.dt - cfg.total_time) > 1e-9 * std::max(1.0, cfg.total_time))
        throw ConfigError("total_time must be an integer multiple of dt");
    RandomStream rng(cfg.seed, StreamTag::truth);

    auto sample = [&](double t, const StateVector& z) {
        TrajectorySample s;
        s.time = t;
        s.state = z;
        s.energy = total_energy(sys, z);
        s.oscillatory_energy = oscillatory_energy(sys, z);
        s.abs_g = sys.constraint(z.q).norm();
        s.abs_gtilde = soft_constraint_residual(sys, z).norm();
        s.action = sys.n_constraints() == 1 ? action_variable(sys, z) : 0.0;
        return s;
    };

    StateVector z = reference_initial_state(cfg, sys);
    std::vector<TrajectorySample> out;
    out.reserve(static_cast<std::size_t>(steps / cfg.record_every) + 1);
    out.push_back(sample(0.0, z));
    for (long n = 1; n <= steps; ++n) {
        switch (cfg.integrator) {
            case FreeIntegrator::verlet: z = stormer_verlet_step(sys, z, cfg.dt); break;
            case FreeIntegrator::langevin: z = langevin_step(sys, z, cfg.dt, rng); break;
            case FreeIntegrator::rattle: z = rattle_step(sys, z, cfg.dt); break;
            case FreeIntegrator::tangential: z = tangential_momentum_step(sys, z, cfg.dt); break;
        }
        if (!z.finite()) throw Error("simulate: non-finite state at step " + std::to_string(n));
        if (n % cfg.record_every == 0) out.push_back(sample(n * cfg.dt, z));
    }
    return out;
}

void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
    std::ofstream out = open_output(path);
    out << "time,rmse_q,rmse_p_tan,mean_Hosc,mean_J,mean_abs_g,mean_abs_gtilde\n";
    for (const auto& r : metrics.records) {
        out << format_double(r.time) << ',' << format_double(r.rmse_q) << ','
            << format_double(r.rmse_p_tan) << ',' << format_double(r.mean_Hosc) << ','
            << format_double(r.mean_J) << ',' << format_double(r.mean_abs_g) << ','
            << format_double(r.mean_abs_gtilde) << '\n';
    }
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result) {
    std::ofstream out = open_output(path);
    out << "value,rmse_q,rmse_p_tan,mean_Hosc,mean_J,mean_abs_g,mean_abs_gtilde,status\n";
    for (const auto& row : result.rows) {
        const auto& a = row.average;
        std::string status = row.error.empty() ? "ok" : row.error;
        for (char& c : status)
            if (c == ',' || c == '\n' || c == '"') c = ' ';
        out << format_double(row.value) << ',' << format_double(a.rmse_q) << ','
            << format_double(a.rmse_p_tan) << ',' << format_double(a.mean_Hosc) << ','
            << format_double(a.mean_J) << ',' << format_double(a.mean_abs_g) << ','
            << format_double(a.mean_abs_gtilde) << ',' << status << '\n';
    }
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<TrajectorySample>& samples) {
    std::ofstream out = open_output(path);
    const Eigen::Index n = samples.empty() ? 0 : samples.front().state.dof();
    out << "time";
    for (Eigen::Index i = 0; i < n; ++i) out << ",q" << i + 1;
    for (Eigen::Index i = 0; i < n; ++i) out << ",p" << i + 1;
    out << ",energy,Hosc,abs_g,abs_gtilde,J\n";
    for (const auto& s : samples) {
        out << format_double(s.time);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(s.state.q(i));
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(s.state.p(i));
        out << ',' << format_double(s.energy) << ',' << format_double(s.oscillatory_energy) << ','
            << format_double(s.abs_g) << ',' << format_double(s.abs_gtilde) << ','
            << format_double(s.action) << '\n';
    }
}

std::string metadata_json(const ExperimentConfig& cfg, const std::string& command,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    nlohmann::ordered_json config;
    for (const auto& [k, v] : cfg.to_key_values()) config[k] = v;
    j["config"] = config;
    j["conventions"] = {
        {"rmse_q", "|mean(q) - q_ref| / sqrt(N)"},
        {"rmse_p_tan", "|P_T(q_ref) (mean(p) - p_ref)| / sqrt(N), P_T = I - G^T (G G^T)^-1 G"},
        {"metrics_time", cfg.metrics_stage == MetricsStage::forecast
                             ? "forecast ensemble at each observation time, before the analysis"
                             : "analysis ensemble after inflation and balancing"},
        {"mean_J", "ensemble mean of H_osc / |G(q)|; zero for systems with several constraints"},
        {"mean_abs_g", "ensemble mean of the Euclidean norm of g(q)"},
        {"time_average", "arithmetic mean over observation times t >= burn_in"},
        {"dt", "dt = " + format_double(cfg.dt) + " as given; power notation a^b is evaluated literally"}};
    for (const auto& [k, v] : extra) j[k] = v;
    return j.dump(2) + "\n";
}

}  // namespace oscda
