#pragma once

#include "oscda/balancing.hpp"
#include "oscda/diagnostics.hpp"
#include "oscda/filters.hpp"
#include "oscda/integrators.hpp"
#include "oscda/models.hpp"

#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace oscda {

enum class Scenario { A, B };
enum class BalancingMethod { none, penalty, pseudo_obs, blending };
enum class InitialBalance { full, positions, none };
enum class MetricsStage { forecast, analysis };
enum class AnalysisFilter { esrf, enkf };
enum class FreeIntegrator { verlet, langevin, rattle, tangential };

/// Flat experiment description. Defaults reproduce the double pendulum
/// setting (scenario A); every field has a key in the text format.
struct ExperimentConfig {
    // model
    std::string model = "double_pendulum";  // double_pendulum | elliptic_pendulum
    double epsilon = 1e-3;
    std::vector<double> force_constants{1.0, 0.04};
    double gravity = 10.0;
    std::vector<double> rest_lengths{1.0, 1.0};
    double ellipse_axis = 36.0;
    std::vector<double> potential_gradient{0.0, 0.0};
    double friction = 0.0;
    double kbt = 0.0;  // zero: no thermal embedding

    // time stepping and observations
    double dt = 1e-3;
    int ensemble_size = 20;
    std::string observed = "q";
    double obs_interval = 0.02;
    double obs_variance = 0.05;
    double initial_variance = 0.1;
    double inflation = 1.05;
    double total_time = 200.0;
    Scenario scenario = Scenario::A;
    AnalysisFilter filter = AnalysisFilter::esrf;

    // balancing
    BalancingMethod balancing = BalancingMethod::none;
    double penalty_weight = 1e4;
    bool penalty_soft_constraint = false;
    bool penalty_project_momentum = false;
    double penalty_newton_tol = 1e-10;
    int penalty_newton_max_iter = 25;
    int blend_window = 20;
    BlendRamp blend_ramp = BlendRamp::linear;

    // initial state
    std::uint64_t seed = 1;
    std::vector<double> initial_q{1.0, 0.0, 2.0, 0.0};
    std::vector<double> initial_p{0.0, 0.0, 0.0, 0.0};
    InitialBalance initial_balance = InitialBalance::full;
    double normal_impulse = 0.0;

    // output
    double burn_in = 0.0;
    MetricsStage metrics_stage = MetricsStage::forecast;
    FreeIntegrator integrator = FreeIntegrator::verlet;
    int record_every = 1;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);

    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    /// Every key with its resolved value, in schema order.
    std::vector<std::pair<std::string, std::string>> to_key_values() const;

    /// dt_obs / dt, required integral.
    int steps_per_observation() const;
    /// total_time / dt_obs, required integral.
    int n_cycles() const;
};

/// Sets a single key; unknown keys and malformed values raise ConfigError.
void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Reads a number, accepting the power notation "a^b" besides ordinary literals.
double parse_number(const std::string& text);

/// Every key the text format accepts, in schema order.
const std::vector<std::string>& config_keys();

SystemPtr make_system(const ExperimentConfig& cfg);
ObservationModel make_observation_model(const ExperimentConfig& cfg);

/// Truth states at t_k = k dt_obs, k = 0..n_cycles.
struct ReferenceRun {
    std::vector<double> times;
    std::vector<StateVector> states;
};

/// Initial truth state before integration.
StateVector reference_initial_state(const ExperimentConfig& cfg, const StiffSystem& system);

ReferenceRun generate_reference(const ExperimentConfig& cfg);

/// y_k = H z_ref(t_k) + sqrt(rho) xi_k for every stored reference state.
std::vector<Eigen::VectorXd> generate_observations(const ReferenceRun& reference,
                                                   const ObservationModel& obs, RandomStream& rng);

/// Gaussian perturbations of the initial truth, then the configured initial balancing.
Ensemble initial_ensemble(const ExperimentConfig& cfg, const StiffSystem& system,
                          const StateVector& z0);

struct RunOptions {
    int threads = 1;
    /// Selects independent forecast/analysis noise streams for sweep members.
    int run_index = 0;
    /// Shared truth and observations; generated from the config when null.
    const ReferenceRun* reference = nullptr;
    const std::vector<Eigen::VectorXd>* observations = nullptr;
};

struct TwinResult {
    RunMetrics metrics;
    std::vector<StateVector> ensemble_mean;  // at each recorded time
    int newton_unconverged = 0;
};

TwinResult run_twin_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

enum class SweepParameter { lambda, window };

SweepParameter parse_sweep_parameter(const std::string& name);

struct SweepRow {
    double value = 0.0;
    MetricsRecord average;
    std::string error;  // empty on success
};

struct SweepResult {
    SweepParameter parameter = SweepParameter::lambda;
    std::vector<SweepRow> rows;
    bool all_succeeded() const;
};

/// One twin experiment per value against a shared truth and observation set.
SweepResult sweep(const ExperimentConfig& cfg, SweepParameter parameter,
                  const std::vector<double>& values, int threads = 1);

/// One row of a free trajectory.
struct TrajectorySample {
    double time = 0.0;
    StateVector state;
    double energy = 0.0;
    double oscillatory_energy = 0.0;
    double abs_g = 0.0;
    double abs_gtilde = 0.0;
    double action = 0.0;  // zero for systems with several constraints
};

/// Free run of the configured model with cfg.integrator from the balanced
/// (scenario A) or impulsed (scenario B) initial state.
std::vector<TrajectorySample> simulate_free(const ExperimentConfig& cfg);

// --- output ---------------------------------------------------------------

std::string format_double(double v);

void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics);
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);
void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<TrajectorySample>& samples);

/// JSON document with the resolved configuration, seed, command and the
/// diagnostic conventions in use.
std::string metadata_json(const ExperimentConfig& cfg, const std::string& command,
                          const std::vector<std::pair<std::string, std::string>>& extra = {});

// --- parallel execution ----------------------------------------------------

/// Runs body(i) for i in [0, n) on up to `threads` workers with static
/// contiguous chunks. The first exception in index order is rethrown.
template <class Body>
void parallel_for(int n, int threads, Body&& body) {
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int begin = static_cast<int>(static_cast<long>(n) * w / workers);
        const int end = static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
        pool.emplace_back([&, w, begin, end] {
            try {
                for (int i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace oscda
