#pragma once

#include "oscda/models.hpp"

#include <vector>

namespace oscda {

/// Tolerance and iteration cap for the multiplier solves in the constrained steps.
struct ConstraintSolverOptions {
    double tol = 1e-10;
    int max_iter = 50;
};

/// Position Verlet (drift-kick-drift) for the full stiff equations of motion.
StateVector stormer_verlet_step(const StiffSystem& system, const StateVector& z, double h);

/// True when h * omega_fast < 2 with omega_fast estimated as sqrt(max K) / eps
/// times the largest singular value of G(q).
bool stormer_verlet_stable(const StiffSystem& system, const Vector& q, double h);

/// Exact Ornstein-Uhlenbeck momentum update over a time span `dt`.
void ornstein_uhlenbeck_kick(const LangevinParams& params, Vector& p, double dt,
                             RandomStream& rng);

/// OU(h/2) o Verlet(h) o OU(h/2). With gamma = 0 this is bit-identical to
/// stormer_verlet_step.
StateVector langevin_step(const StiffSystem& system, const StateVector& z, double h,
                          RandomStream& rng);

/// RATTLE step for the constrained limit system: Newton on the position
/// constraint followed by a linear momentum projection.
StateVector rattle_step(const StiffSystem& system, const StateVector& z, double h,
                        const ConstraintSolverOptions& opts = {});

/// Symmetric projection method for the limit system that keeps momenta
/// tangential:
///
///   q_half = q_n + h/2 p_n
///   p_{n+1} = p_n - h grad V(q_half) - G(q_half)^T mu
///   q_{n+1} = q_half + h/2 p_{n+1}
///   G(q_{n+1}) p_{n+1} = 0
///
/// The scaled multiplier mu = h lambda is found by fixed-point iteration,
/// each sweep solving the linear system
/// G(q_{n+1}) G(q_half)^T mu = G(q_{n+1}) (p_n - h grad V(q_half)).
StateVector tangential_momentum_step(const StiffSystem& system, const StateVector& z, double h,
                                     const ConstraintSolverOptions& opts = {});

/// alpha * verlet(z) + (1 - alpha) * tangential(z).
StateVector blended_step(const StiffSystem& system, const StateVector& z, double h, double alpha,
                         const ConstraintSolverOptions& opts = {});

/// OU(h/2) o blended(h, alpha) o OU(h/2); reduces to langevin_step at alpha = 1.
StateVector langevin_blended_step(const StiffSystem& system, const StateVector& z, double h,
                                  double alpha, RandomStream& rng,
                                  const ConstraintSolverOptions& opts = {});

enum class BlendRamp { linear, cosine };

/// Blending weights 0 = a_1 < a_2 <= ... <= a_{k-1} < a_k = 1 followed by
/// eta - k pure full-model steps.
class BlendSchedule {
public:
    BlendSchedule(std::vector<double> alphas, int eta);

    static BlendSchedule ramp(int k, int eta, BlendRamp shape = BlendRamp::linear);

    const std::vector<double>& alphas() const { return alphas_; }
    int window() const { return static_cast<int>(alphas_.size()); }
    int eta() const { return eta_; }

    /// Weight used for the step with zero-based index `step`.
    double weight(int step) const {
        return step < window() ? alphas_[static_cast<std::size_t>(step)] : 1.0;
    }

private:
    std::vector<double> alphas_;
    int eta_;
};

/// Blending phase followed by plain forecast steps; returns all eta + 1 states.
/// A non-null `rng` selects the Langevin variants of the steps.
std::vector<StateVector> blended_forecast(const StiffSystem& system, const StateVector& z,
                                          double h, const BlendSchedule& schedule,
                                          RandomStream* rng = nullptr,
                                          const ConstraintSolverOptions& opts = {});

}  // namespace oscda
