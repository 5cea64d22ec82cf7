#pragma once

#include "oscda/filters.hpp"
#include "oscda/models.hpp"

#include <vector>

namespace oscda {

/// |p|^2 / 2 + g^T K g / (2 eps^2) + V(q)
double total_energy(const StiffSystem& system, const StateVector& z);

/// Energy of the motion normal to {g = 0}:
/// (Gp)^T (G G^T)^{-1} Gp / 2 + g^T K g / (2 eps^2).
double oscillatory_energy(const StiffSystem& system, const StateVector& z);

/// eps^-1 |G(q)| for systems with a single constraint.
double fast_frequency(const StiffSystem& system, const Vector& q);

/// Action of the normal oscillation, H_osc / omega_1 with omega_1 = |G(q)|
/// the eps-free normal frequency.
double action_variable(const StiffSystem& system, const StateVector& z);

/// (omega_1^2 p_x^2 + k g^2 / eps^2) / (2 omega_1) with p_x = (G G^T)^{-1} G p.
/// Agrees with action_variable.
double action_variable_explicit(const StiffSystem& system, const StateVector& z);

/// Gradient of |G(q)|; closed form when the model provides one, otherwise
/// central differences.
Vector normal_frequency_gradient(const StiffSystem& system, const Vector& q);
Vector normal_frequency_gradient_fd(const StiffSystem& system, const Vector& q,
                                    double step = 1e-6);

/// -J grad omega, the averaged force the normal oscillation exerts on the
/// slow motion.
Vector correction_force(const StiffSystem& system, const StateVector& z);

/// One row of metrics.csv.
struct MetricsRecord {
    double time = 0.0;
    double rmse_q = 0.0;
    double rmse_p_tan = 0.0;
    double mean_Hosc = 0.0;
    double mean_J = 0.0;
    double mean_abs_g = 0.0;
    double mean_abs_gtilde = 0.0;
};

struct RunMetrics {
    std::vector<MetricsRecord> records;
    /// Records with time < burn_in are left out of the averages.
    double burn_in = 0.0;

    /// Arithmetic mean of every column over the retained records; the time
    /// field holds the number of retained records.
    MetricsRecord time_average() const;
};

/// Ensemble averages of H_osc, J, |g| and |g~|. J is reported as zero when
/// the system has more than one constraint.
struct BalanceSummary {
    double mean_Hosc = 0.0;
    double mean_J = 0.0;
    double mean_abs_g = 0.0;
    double mean_abs_gtilde = 0.0;
};

BalanceSummary ensemble_balance(const StiffSystem& system, const Ensemble& ens);

/// |q_mean - q_ref| / sqrt(N)
double rmse_positions(const Vector& q_mean, const Vector& q_ref);

/// |P_T(q_ref) (p_mean - p_ref)| / sqrt(N)
double rmse_tangential_momenta(const StiffSystem& system, const StateVector& mean,
                               const StateVector& ref);

/// RMSE columns for a mean trajectory against the reference on a common time
/// grid; the balance columns stay zero.
RunMetrics rmse_metrics(const StiffSystem& system, const std::vector<double>& times,
                        const std::vector<StateVector>& mean_trajectory,
                        const std::vector<StateVector>& reference);

}  // namespace oscda
