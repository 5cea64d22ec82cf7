#include "oscda/balancing.hpp"

#include <cmath>
#include <string>

namespace oscda {

namespace {

ConstraintVector penalty_residual(const StiffSystem& system, const Vector& q, bool soft,
                                  const Vector* p_hat) {
    if (!soft) return system.constraint(q);
    return soft_constraint_residual(system, StateVector(q, *p_hat));
}

DofMatrix position_covariance(const Ensemble& ens) {
    const Eigen::MatrixXd Q = ens.positions().colwise() - ens.positions().rowwise().mean();
    return Q * Q.transpose() / static_cast<double>(ens.size() - 1);
}

}  // namespace

DofMatrix regularized_background(const DofMatrix& B_in) {
    DofMatrix B = 0.5 * (B_in + B_in.transpose());
    const Eigen::Index n = B.rows();
    const double trace = B.trace();
    Eigen::SelfAdjointEigenSolver<DofMatrix> eig(B, Eigen::EigenvaluesOnly);
    const double min_eig = eig.eigenvalues().minCoeff();
    const double scale = trace > 0.0 ? trace / static_cast<double>(n) : 1.0;
    if (min_eig <= 1e-10 * scale) {
        B.diagonal().array() += 1e-10 * scale;
        if (min_eig < 0.0) B.diagonal().array() -= min_eig;
    }
    return B;
}

double penalty_cost(const StiffSystem& system, const Vector& q, const Vector& q_hat,
                    const DofMatrix& B, double weight) {
    const Vector d = q - q_hat;
    Eigen::LDLT<DofMatrix> ldlt(B);
    const ConstraintVector g = system.constraint(q);
    return 0.5 * d.dot(ldlt.solve(d)) +
           0.5 * weight * g.dot(system.force_constants().cwiseProduct(g));
}

PenaltyResult penalty_newton(const StiffSystem& system, const Vector& q_hat,
                             const PenaltyConfig& cfg, const DofMatrix& B, const Vector* p_hat) {
    if (!(cfg.weight >= 0.0) || !std::isfinite(cfg.weight))
        throw Error("penalty_newton: weight must be finite and non-negative");
    if (cfg.use_soft_constraint && p_hat == nullptr)
        throw Error("penalty_newton: soft constraint needs the analysis momentum");
    if (B.rows() != q_hat.size() || B.cols() != q_hat.size())
        throw DimensionError("penalty_newton: background matrix has wrong shape");

    PenaltyResult result;
    result.q = q_hat;
    if (cfg.weight == 0.0) {
        result.converged = true;
        return result;
    }

    // (w K)^{-1} as a diagonal
    const ConstraintVector inv_wk = (cfg.weight * system.force_constants()).cwiseInverse();
    const Jacobian G_hat = system.jacobian(q_hat);
    const DofMatrix BGt = B * G_hat.transpose();

    // With d = q - q_hat and S = (wK)^{-1} + G(q) B G_hat^T the Newton update
    // collapses to q_new = q_hat + B G_hat^T S^{-1} (G(q) d - g(q)).
    for (int it = 0; it < cfg.newton_max_iter; ++it) {
        const Vector d = result.q - q_hat;
        const Jacobian G_cur = system.jacobian(result.q);
        ConstraintMatrix S = G_cur * BGt;
        S.diagonal() += inv_wk;
        Eigen::FullPivLU<ConstraintMatrix> lu(S);
        if (!lu.isInvertible()) throw SingularConfiguration("penalty_newton: singular Newton matrix");
        const ConstraintVector rhs =
            G_cur * d - penalty_residual(system, result.q, cfg.use_soft_constraint, p_hat);
        const Vector q_new = q_hat + BGt * lu.solve(rhs);
        if (!q_new.allFinite())
            throw Error("penalty_newton: non-finite iterate at iteration " + std::to_string(it));
        result.last_update_norm = (q_new - result.q).norm();
        result.q = q_new;
        result.iterations = it + 1;
        if (result.last_update_norm <= cfg.newton_tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

Vector penalty_linearized(const StiffSystem& system, const Vector& q_hat, const PenaltyConfig& cfg,
                          const DofMatrix& B) {
    const Jacobian G = system.jacobian(q_hat);
    const ConstraintVector k = system.force_constants();
    const ConstraintVector g = system.constraint(q_hat);
    Eigen::LDLT<DofMatrix> b_ldlt(B);
    if (b_ldlt.info() != Eigen::Success) throw SingularConfiguration("penalty: B not invertible");
    const Eigen::Index n = q_hat.size();
    DofMatrix M = b_ldlt.solve(DofMatrix::Identity(n, n));
    M += cfg.weight * G.transpose() * k.asDiagonal() * G;
    Eigen::FullPivLU<DofMatrix> lu(M);
    if (!lu.isInvertible()) throw SingularConfiguration("penalty: singular normal matrix");
    return q_hat - lu.solve(Vector(cfg.weight * (G.transpose() * k.cwiseProduct(g))));
}

Vector penalty_linearized_woodbury(const StiffSystem& system, const Vector& q_hat,
                                   const PenaltyConfig& cfg, const DofMatrix& B) {
    const Jacobian G = system.jacobian(q_hat);
    const ConstraintVector g = system.constraint(q_hat);
    const DofMatrix BGt = B * G.transpose();
    ConstraintMatrix S = G * BGt;
    S.diagonal() += (cfg.weight * system.force_constants()).cwiseInverse();
    Eigen::FullPivLU<ConstraintMatrix> lu(S);
    if (!lu.isInvertible())
        throw SingularConfiguration("penalty: singular (wK)^{-1} + G B G^T");
    return q_hat - BGt * lu.solve(g);
}

Ensemble penalty_balance(const StiffSystem& system, const Ensemble& ens, const PenaltyConfig& cfg,
                         int* unconverged) {
    if (ens.dof() != system.n_dof()) throw DimensionError("penalty_balance: dimension mismatch");
    const DofMatrix B = regularized_background(position_covariance(ens));
    Ensemble out = ens;
    int failures = 0;
    for (Eigen::Index i = 0; i < ens.size(); ++i) {
        StateVector z = ens.member(i);
        PenaltyResult r = penalty_newton(system, z.q, cfg, B, &z.p);
        if (!r.converged) ++failures;
        z.q = r.q;
        if (cfg.project_momentum) z.p = tangent_projector(system, z.q) * z.p;
        out.set_member(i, z);
    }
    if (unconverged) *unconverged = failures;
    return out;
}

Ensemble pseudo_obs_balance(const StiffSystem& system, const Ensemble& ens, RandomStream& rng) {
    Eigen::MatrixXd draws(system.n_constraints(), ens.size());
    rng.fill_gaussian(draws);
    return pseudo_obs_balance(system, ens, draws);
}

Ensemble pseudo_obs_balance(const StiffSystem& system, const Ensemble& ens,
                            const Eigen::MatrixXd& standard_normals) {
    if (!system.langevin())
        throw Error("pseudo_obs_balance: needs a thermally embedded system (k_B T)");
    if (ens.dof() != system.n_dof()) throw DimensionError("pseudo_obs_balance: dimension mismatch");
    if (standard_normals.rows() != system.n_constraints() || standard_normals.cols() != ens.size())
        throw DimensionError("pseudo_obs_balance: noise draws have wrong shape");

    const double eps = system.epsilon();
    // pseudo-observation error covariance k_B T eps^2 K^{-1} (diagonal)
    const ConstraintVector noise_var =
        (system.langevin()->kbt * eps * eps) * system.force_constants().cwiseInverse();
    const ConstraintVector noise_sd = noise_var.cwiseSqrt();
    const DofMatrix P = regularized_background(position_covariance(ens));

    Ensemble out = ens;
    for (Eigen::Index i = 0; i < ens.size(); ++i) {
        const Vector q_hat = ens.positions().col(i);
        const Jacobian G = system.jacobian(q_hat);
        const DofMatrix PGt = P * G.transpose();
        ConstraintMatrix S = G * PGt;
        S.diagonal() += noise_var;
        Eigen::LDLT<ConstraintMatrix> ldlt(S);
        if (ldlt.info() != Eigen::Success)
            throw SingularConfiguration("pseudo_obs_balance: singular innovation matrix");
        const ConstraintVector xi = noise_sd.cwiseProduct(
            ConstraintVector(standard_normals.col(i)));
        const ConstraintVector innovation = system.constraint(q_hat) + xi;
        out.positions().col(i) = q_hat - PGt * ldlt.solve(innovation);
    }
    return out;
}

}  // namespace oscda
