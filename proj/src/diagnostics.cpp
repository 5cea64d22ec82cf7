#include "oscda/diagnostics.hpp"

#include <cmath>

namespace oscda {

namespace {

void require_single_constraint(const StiffSystem& system, const char* what) {
    if (system.n_constraints() != 1)
        throw Error(std::string(what) + ": only defined for systems with one constraint");
}

double normal_frequency(const StiffSystem& system, const Vector& q) {
    return system.jacobian(q).row(0).norm();
}

}  // namespace

double total_energy(const StiffSystem& system, const StateVector& z) {
    const ConstraintVector g = system.constraint(z.q);
    const double eps = system.epsilon();
    return 0.5 * z.p.squaredNorm() +
           0.5 * g.dot(system.force_constants().cwiseProduct(g)) / (eps * eps) +
           system.potential(z.q);
}

double oscillatory_energy(const StiffSystem& system, const StateVector& z) {
    const Jacobian G = system.jacobian(z.q);
    const ConstraintVector Gp = G * z.p;
    const ConstraintVector g = system.constraint(z.q);
    const double eps = system.epsilon();
    return 0.5 * Gp.dot(solve_gram(G, Gp)) +
           0.5 * g.dot(system.force_constants().cwiseProduct(g)) / (eps * eps);
}

double fast_frequency(const StiffSystem& system, const Vector& q) {
    require_single_constraint(system, "fast_frequency");
    return normal_frequency(system, q) / system.epsilon();
}

double action_variable(const StiffSystem& system, const StateVector& z) {
    require_single_constraint(system, "action_variable");
    const double omega = system.epsilon() * fast_frequency(system, z.q);
    if (!(omega > 0.0)) throw SingularConfiguration("action_variable: zero normal frequency");
    return oscillatory_energy(system, z) / omega;
}

double action_variable_explicit(const StiffSystem& system, const StateVector& z) {
    require_single_constraint(system, "action_variable_explicit");
    const Jacobian G = system.jacobian(z.q);
    const double omega2 = G.row(0).squaredNorm();
    if (!(omega2 > 0.0)) throw SingularConfiguration("action_variable: zero normal frequency");
    const double omega = std::sqrt(omega2);
    const double p_x = G.row(0).dot(z.p) / omega2;
    const double g = system.constraint(z.q)(0);
    const double eps = system.epsilon();
    const double k = system.force_constants()(0);
    return (omega2 * p_x * p_x + k * g * g / (eps * eps)) / (2.0 * omega);
}

Vector normal_frequency_gradient_fd(const StiffSystem& system, const Vector& q, double step) {
    require_single_constraint(system, "normal_frequency_gradient");
    Vector grad(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        const double s = step * std::max(1.0, std::abs(q(i)));
        Vector qp = q, qm = q;
        qp(i) += s;
        qm(i) -= s;
        grad(i) = (normal_frequency(system, qp) - normal_frequency(system, qm)) / (2.0 * s);
    }
    return grad;
}

Vector normal_frequency_gradient(const StiffSystem& system, const Vector& q) {
    require_single_constraint(system, "normal_frequency_gradient");
    if (auto exact = system.frequency_gradient(q)) return *exact;
    return normal_frequency_gradient_fd(system, q);
}

Vector correction_force(const StiffSystem& system, const StateVector& z) {
    const double J = action_variable(system, z);
    if (J == 0.0) return Vector::Zero(z.dof());
    return -J * normal_frequency_gradient(system, z.q);
}

MetricsRecord RunMetrics::time_average() const {
    MetricsRecord avg;
    int count = 0;
    for (const auto& r : records) {
        if (r.time < burn_in) continue;
        avg.rmse_q += r.rmse_q;
        avg.rmse_p_tan += r.rmse_p_tan;
        avg.mean_Hosc += r.mean_Hosc;
        avg.mean_J += r.mean_J;
        avg.mean_abs_g += r.mean_abs_g;
        avg.mean_abs_gtilde += r.mean_abs_gtilde;
        ++count;
    }
    avg.time = count;
    if (count == 0) return avg;
    const double inv = 1.0 / count;
    avg.rmse_q *= inv;
    avg.rmse_p_tan *= inv;
    avg.mean_Hosc *= inv;
    avg.mean_J *= inv;
    avg.mean_abs_g *= inv;
    avg.mean_abs_gtilde *= inv;
    return avg;
}

BalanceSummary ensemble_balance(const StiffSystem& system, const Ensemble& ens) {
    BalanceSummary s;
    const bool single = system.n_constraints() == 1;
    for (Eigen::Index i = 0; i < ens.size(); ++i) {
        const StateVector z = ens.member(i);
        s.mean_Hosc += oscillatory_energy(system, z);
        if (single) s.mean_J += action_variable(system, z);
        s.mean_abs_g += system.constraint(z.q).norm();
        s.mean_abs_gtilde += soft_constraint_residual(system, z).norm();
    }
    const double inv = 1.0 / static_cast<double>(ens.size());
    s.mean_Hosc *= inv;
    s.mean_J *= inv;
    s.mean_abs_g *= inv;
    s.mean_abs_gtilde *= inv;
    return s;
}

double rmse_positions(const Vector& q_mean, const Vector& q_ref) {
    if (q_mean.size() != q_ref.size()) throw DimensionError("rmse: dimension mismatch");
    return (q_mean - q_ref).norm() / std::sqrt(static_cast<double>(q_ref.size()));
}

double rmse_tangential_momenta(const StiffSystem& system, const StateVector& mean,
                               const StateVector& ref) {
    if (mean.dof() != ref.dof()) throw DimensionError("rmse: dimension mismatch");
    const Vector dp = tangent_projector(system, ref.q) * (mean.p - ref.p);
    return dp.norm() / std::sqrt(static_cast<double>(ref.dof()));
}

RunMetrics rmse_metrics(const StiffSystem& system, const std::vector<double>& times,
                        const std::vector<StateVector>& mean_trajectory,
                        const std::vector<StateVector>& reference) {
    if (mean_trajectory.size() != times.size() || reference.size() != times.size())
        throw DimensionError("rmse_metrics: trajectories are not on the same time grid");
    RunMetrics out;
    out.records.reserve(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        MetricsRecord r;
        r.time = times[k];
        r.rmse_q = rmse_positions(mean_trajectory[k].q, reference[k].q);
        r.rmse_p_tan = rmse_tangential_momenta(system, mean_trajectory[k], reference[k]);
        out.records.push_back(r);
    }
    return out;
}

}  // namespace oscda
