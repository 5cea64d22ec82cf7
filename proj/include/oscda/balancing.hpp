#pragma once

#include "oscda/filters.hpp"
#include "oscda/models.hpp"

#include <optional>

namespace oscda {

/// Settings of the post-analysis penalty rebalancing. The background matrix B
/// is passed separately; by default it is the q-block of the analysis
/// ensemble covariance.
struct PenaltyConfig {
    double weight = 1.0;  // penalty weight on g^T K g
    bool use_soft_constraint = false;
    double newton_tol = 1e-10;
    int newton_max_iter = 25;
    bool project_momentum = false;
};

struct PenaltyResult {
    Vector q;
    bool converged = false;
    int iterations = 0;
    double last_update_norm = 0.0;
};

/// Symmetrizes B and adds 1e-10 trace(B)/N on the diagonal when it is not
/// safely positive definite.
DofMatrix regularized_background(const DofMatrix& B);

/// J(q) = (q - q_hat)^T B^{-1} (q - q_hat) / 2 + weight g(q)^T K g(q) / 2
double penalty_cost(const StiffSystem& system, const Vector& q, const Vector& q_hat,
                    const DofMatrix& B, double weight);

/// Newton iteration on the penalty functional with the constraint Jacobian
/// frozen at q_hat:
///
///   q <- q - (B^{-1} + w G_i^T K G(q))^{-1} (B^{-1} (q - q_hat) + w G_i^T K g(q))
///
/// Each step is evaluated through the Woodbury identity, so huge weights stay
/// well conditioned. With use_soft_constraint the residual g(q) is replaced by
/// g(q) - eps^2 lambda(q, p_hat), which requires `p_hat`.
PenaltyResult penalty_newton(const StiffSystem& system, const Vector& q_hat,
                             const PenaltyConfig& cfg, const DofMatrix& B,
                             const Vector* p_hat = nullptr);

/// Closed-form minimizer of the linearized functional,
/// q_hat - (B^{-1} + w G^T K G)^{-1} w G^T K g(q_hat).
Vector penalty_linearized(const StiffSystem& system, const Vector& q_hat, const PenaltyConfig& cfg,
                          const DofMatrix& B);

/// Same minimizer in Kalman form, q_hat - B G^T ((w K)^{-1} + G B G^T)^{-1} g(q_hat).
Vector penalty_linearized_woodbury(const StiffSystem& system, const Vector& q_hat,
                                   const PenaltyConfig& cfg, const DofMatrix& B);

/// Applies penalty_newton to every member with B taken from the ensemble
/// position covariance. Returns the number of members whose Newton
/// iteration hit the cap through `unconverged` when non-null.
Ensemble penalty_balance(const StiffSystem& system, const Ensemble& ens, const PenaltyConfig& cfg,
                         int* unconverged = nullptr);

/// EnKF update of the positions against the pseudo-observation g(q) = 0 with
/// error covariance k_B T eps^2 K^{-1}; momenta pass through untouched.
Ensemble pseudo_obs_balance(const StiffSystem& system, const Ensemble& ens, RandomStream& rng);

/// As pseudo_obs_balance with explicit standard-normal draws (L x M), which
/// are scaled by the pseudo-observation standard deviation.
Ensemble pseudo_obs_balance(const StiffSystem& system, const Ensemble& ens,
                            const Eigen::MatrixXd& standard_normals);

}  // namespace oscda
