#include "oscda/integrators.hpp"

#include <cmath>
#include <string>

namespace oscda {

namespace {

Vector checked_force(const StiffSystem& system, const Vector& q) {
    Vector f = eval_stiff_force(system, q);
    if (!f.allFinite()) throw Error(system.name() + ": non-finite force evaluation");
    return f;
}

const LangevinParams& require_langevin(const StiffSystem& system) {
    if (!system.langevin())
        throw Error(system.name() + ": Langevin step requested but no friction/temperature set");
    return *system.langevin();
}

}  // namespace

StateVector stormer_verlet_step(const StiffSystem& system, const StateVector& z, double h) {
    const Vector q_half = z.q + 0.5 * h * z.p;
    Vector p = z.p + h * checked_force(system, q_half);
    Vector q = q_half + 0.5 * h * p;
    return StateVector(std::move(q), std::move(p));
}

bool stormer_verlet_stable(const StiffSystem& system, const Vector& q, double h) {
    const Jacobian G = system.jacobian(q);
    const ConstraintVector sqrt_k = system.force_constants().cwiseSqrt();
    const ConstraintMatrix M = sqrt_k.asDiagonal() * (G * G.transpose()) * sqrt_k.asDiagonal();
    Eigen::SelfAdjointEigenSolver<ConstraintMatrix> eig(M, Eigen::EigenvaluesOnly);
    const double omega = std::sqrt(eig.eigenvalues().maxCoeff()) / system.epsilon();
    return h * omega < 2.0;
}

void ornstein_uhlenbeck_kick(const LangevinParams& params, Vector& p, double dt,
                             RandomStream& rng) {
    const double decay = std::exp(-params.gamma * dt);
    const double amplitude = std::sqrt(params.kbt * (1.0 - decay * decay));
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = decay * p(i) + amplitude * rng.gaussian();
}

StateVector langevin_step(const StiffSystem& system, const StateVector& z, double h,
                          RandomStream& rng) {
    const LangevinParams& params = require_langevin(system);
    StateVector w = z;
    ornstein_uhlenbeck_kick(params, w.p, 0.5 * h, rng);
    w = stormer_verlet_step(system, w, h);
    ornstein_uhlenbeck_kick(params, w.p, 0.5 * h, rng);
    return w;
}

StateVector rattle_step(const StiffSystem& system, const StateVector& z, double h,
                        const ConstraintSolverOptions& opts) {
    const Jacobian G0 = system.jacobian(z.q);
    const Vector unconstrained = z.q + h * z.p - 0.5 * h * h * system.potential_gradient(z.q);

    // Position stage: find nu with g(unconstrained - G0^T nu) = 0.
    ConstraintVector nu = ConstraintVector::Zero(system.n_constraints());
    Vector q = unconstrained;
    ConstraintVector g = system.constraint(q);
    int it = 0;
    while (g.norm() > opts.tol) {
        if (it == opts.max_iter || !g.allFinite())
            throw ConvergenceError("rattle_step: position constraint solve did not converge",
                                   it, g.norm());
        const ConstraintMatrix J = system.jacobian(q) * G0.transpose();
        Eigen::PartialPivLU<ConstraintMatrix> lu(J);
        nu += lu.solve(g);
        q = unconstrained - G0.transpose() * nu;
        g = system.constraint(q);
        ++it;
    }

    // Momentum stage: project onto G(q_{n+1}) p = 0.
    const Vector p_half = (q - z.q) / h;
    const Vector p_free = p_half - 0.5 * h * system.potential_gradient(q);
    const Jacobian G1 = system.jacobian(q);
    Vector p = p_free - G1.transpose() * solve_gram(G1, G1 * p_free);
    return StateVector(std::move(q), std::move(p));
}

StateVector tangential_momentum_step(const StiffSystem& system, const StateVector& z, double h,
                                     const ConstraintSolverOptions& opts) {
    const Vector q_half = z.q + 0.5 * h * z.p;
    const Vector p_free = z.p - h * system.potential_gradient(q_half);
    const Jacobian G_half = system.jacobian(q_half);

    ConstraintVector mu = ConstraintVector::Zero(system.n_constraints());
    Vector p = p_free;
    Vector q = q_half + 0.5 * h * p;
    double residual = (system.jacobian(q) * p).norm();
    int it = 0;
    while (residual > opts.tol) {
        if (it == opts.max_iter || !std::isfinite(residual))
            throw ConvergenceError("tangential_momentum_step: multiplier fixed-point iteration "
                                   "exceeded " + std::to_string(opts.max_iter) +
                                       " iterations (|G p| = " + std::to_string(residual) + ")",
                                   it, residual);
        const Jacobian G_end = system.jacobian(q);
        const ConstraintMatrix M = G_end * G_half.transpose();
        Eigen::PartialPivLU<ConstraintMatrix> lu(M);
        mu = lu.solve(ConstraintVector(G_end * p_free));
        p = p_free - G_half.transpose() * mu;
        q = q_half + 0.5 * h * p;
        residual = (system.jacobian(q) * p).norm();
        ++it;
    }
    return StateVector(std::move(q), std::move(p));
}

StateVector blended_step(const StiffSystem& system, const StateVector& z, double h, double alpha,
                         const ConstraintSolverOptions& opts) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw Error("blended_step: alpha must lie in [0, 1], got " + std::to_string(alpha));
    if (alpha == 1.0) return stormer_verlet_step(system, z, h);
    if (alpha == 0.0) return tangential_momentum_step(system, z, h, opts);
    const StateVector fast = stormer_verlet_step(system, z, h);
    const StateVector slow = tangential_momentum_step(system, z, h, opts);
    return StateVector(alpha * fast.q + (1.0 - alpha) * slow.q,
                       alpha * fast.p + (1.0 - alpha) * slow.p);
}

StateVector langevin_blended_step(const StiffSystem& system, const StateVector& z, double h,
                                  double alpha, RandomStream& rng,
                                  const ConstraintSolverOptions& opts) {
    const LangevinParams& params = require_langevin(system);
    StateVector w = z;
    ornstein_uhlenbeck_kick(params, w.p, 0.5 * h, rng);
    w = blended_step(system, w, h, alpha, opts);
    ornstein_uhlenbeck_kick(params, w.p, 0.5 * h, rng);
    return w;
}

BlendSchedule::BlendSchedule(std::vector<double> alphas, int eta)
    : alphas_(std::move(alphas)), eta_(eta) {
    const int k = window();
    if (k < 2) throw Error("BlendSchedule: need at least two weights");
    if (eta_ < k) throw Error("BlendSchedule: forecast length must be at least the window");
    if (alphas_.front() != 0.0 || alphas_.back() != 1.0)
        throw Error("BlendSchedule: weights must start at 0 and end at 1");
    if (!(alphas_[1] > 0.0) || !(alphas_[static_cast<std::size_t>(k - 2)] < 1.0 || k == 2))
        throw Error("BlendSchedule: interior weights must lie strictly inside (0, 1)");
    for (int i = 1; i < k; ++i)
        if (alphas_[static_cast<std::size_t>(i)] < alphas_[static_cast<std::size_t>(i - 1)])
            throw Error("BlendSchedule: weights must be non-decreasing");
}

BlendSchedule BlendSchedule::ramp(int k, int eta, BlendRamp shape) {
    if (k < 2) throw Error("BlendSchedule: window must be at least 2 steps");
    std::vector<double> alphas(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double s = static_cast<double>(i) / (k - 1);
        alphas[static_cast<std::size_t>(i)] =
            shape == BlendRamp::linear ? s : 0.5 * (1.0 - std::cos(M_PI * s));
    }
    alphas.front() = 0.0;
    alphas.back() = 1.0;
    return BlendSchedule(std::move(alphas), eta);
}

std::vector<StateVector> blended_forecast(const StiffSystem& system, const StateVector& z,
                                          double h, const BlendSchedule& schedule,
                                          RandomStream* rng, const ConstraintSolverOptions& opts) {
    std::vector<StateVector> out;
    out.reserve(static_cast<std::size_t>(schedule.eta()) + 1);
    out.push_back(z);
    for (int n = 0; n < schedule.eta(); ++n) {
        const double alpha = schedule.weight(n);
        const StateVector& cur = out.back();
        out.push_back(rng ? langevin_blended_step(system, cur, h, alpha, *rng, opts)
                          : blended_step(system, cur, h, alpha, opts));
    }
    return out;
}

}  // namespace oscda
