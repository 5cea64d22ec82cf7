#include "oscda/models.hpp"

#include <cmath>
#include <algorithm>
#include <string>

namespace oscda {

namespace {

constexpr double kSingularRcond = 1e-13;

}  // namespace

StiffSystem::StiffSystem(int n_dof, ConstraintVector force_constants, double epsilon,
                         std::optional<LangevinParams> langevin)
    : n_dof_(n_dof),
      force_constants_(std::move(force_constants)),
      epsilon_(epsilon),
      langevin_(langevin) {
    if (n_dof_ < 1 || n_dof_ > kMaxDof) throw DimensionError("StiffSystem: unsupported n_dof");
    if (force_constants_.size() < 1 || force_constants_.size() > kMaxConstraints)
        throw DimensionError("StiffSystem: unsupported number of constraints");
    if (!(epsilon_ > 0.0)) throw Error("StiffSystem: epsilon must be positive");
    if ((force_constants_.array() <= 0.0).any())
        throw Error("StiffSystem: force constants must be positive");
    if (langevin_) {
        if (langevin_->gamma < 0.0) throw Error("StiffSystem: friction must be non-negative");
        if (!(langevin_->kbt > 0.0)) throw Error("StiffSystem: k_B T must be positive");
    }
}

void StiffSystem::check_dof(const Vector& v, const char* what) const {
    if (v.size() != n_dof_)
        throw DimensionError(std::string(name()) + ": " + what + " has length " +
                             std::to_string(v.size()) + ", expected " + std::to_string(n_dof_));
}

ConstraintVector StiffSystem::constraint(const Vector& q) const {
    check_dof(q, "q");
    return constraint_impl(q);
}

Jacobian StiffSystem::jacobian(const Vector& q) const {
    check_dof(q, "q");
    return jacobian_impl(q);
}

ConstraintVector StiffSystem::hessian_action(const Vector& q, const Vector& p) const {
    check_dof(q, "q");
    check_dof(p, "p");
    return hessian_action_impl(q, p);
}

double StiffSystem::potential(const Vector& q) const {
    check_dof(q, "q");
    return potential_impl(q);
}

Vector StiffSystem::potential_gradient(const Vector& q) const {
    check_dof(q, "q");
    return potential_gradient_impl(q);
}

std::optional<Vector> StiffSystem::frequency_gradient(const Vector&) const { return std::nullopt; }

ConstraintVector StiffSystem::hessian_action_impl(const Vector& q, const Vector& p) const {
    // d/ds [G(q + s p) p] at s = 0
    const double pn = p.norm();
    if (pn == 0.0) return ConstraintVector::Zero(n_constraints());
    const double s = 1e-5 * std::max(1.0, q.norm()) / pn;
    const Vector qp = q + s * p;
    const Vector qm = q - s * p;
    return (jacobian_impl(qp) * p - jacobian_impl(qm) * p) / (2.0 * s);
}

// --- double pendulum ------------------------------------------------------

DoublePendulum::DoublePendulum(const DoublePendulumParams& params)
    : StiffSystem(4, ConstraintVector{{params.k1, params.k2}}, params.epsilon), params_(params) {
    if (!(params.l1 > 0.0 && params.l2 > 0.0))
        throw Error("DoublePendulum: rod lengths must be positive");
}

ConstraintVector DoublePendulum::constraint_impl(const Vector& q) const {
    const Eigen::Vector2d a = q.segment<2>(0);
    const Eigen::Vector2d b = a - q.segment<2>(2);
    return ConstraintVector{{a.norm() - params_.l1, b.norm() - params_.l2}};
}

Jacobian DoublePendulum::jacobian_impl(const Vector& q) const {
    const Eigen::Vector2d a = q.segment<2>(0);
    const Eigen::Vector2d b = a - q.segment<2>(2);
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw SingularConfiguration("double_pendulum: zero rod length, Jacobian undefined");
    Jacobian G = Jacobian::Zero(2, 4);
    G.block<1, 2>(0, 0) = (a / na).transpose();
    G.block<1, 2>(1, 0) = (b / nb).transpose();
    G.block<1, 2>(1, 2) = -(b / nb).transpose();
    return G;
}

ConstraintVector DoublePendulum::hessian_action_impl(const Vector& q, const Vector& p) const {
    // For r(x) = |x|: r_xx[v, v] = (|v|^2 - (x.v)^2 / |x|^2) / |x|
    auto curvature = [](const Eigen::Vector2d& x, const Eigen::Vector2d& v) {
        const double n = x.norm();
        if (n == 0.0)
            throw SingularConfiguration("double_pendulum: zero rod length, Hessian undefined");
        const double xv = x.dot(v) / n;
        return (v.squaredNorm() - xv * xv) / n;
    };
    const Eigen::Vector2d a = q.segment<2>(0);
    const Eigen::Vector2d b = a - q.segment<2>(2);
    const Eigen::Vector2d va = p.segment<2>(0);
    const Eigen::Vector2d vb = va - p.segment<2>(2);
    return ConstraintVector{{curvature(a, va), curvature(b, vb)}};
}

double DoublePendulum::potential_impl(const Vector& q) const {
    return params_.gravity * (q(1) + q(3));
}

Vector DoublePendulum::potential_gradient_impl(const Vector&) const {
    return Vector{{0.0, params_.gravity, 0.0, params_.gravity}};
}

// --- elliptic pendulum ----------------------------------------------------

EllipticPendulum::EllipticPendulum(const EllipticPendulumParams& params)
    : StiffSystem(2, ConstraintVector::Constant(1, params.force_constant), params.epsilon,
                  params.langevin),
      params_(params) {
    if (!(params.axis_ratio > 0.0)) throw Error("EllipticPendulum: axis ratio must be positive");
}

double EllipticPendulum::metric(const Vector& q) const {
    const double s2 = q(0) * q(0) + params_.axis_ratio * q(1) * q(1);
    if (!(s2 > 0.0))
        throw SingularConfiguration("elliptic_pendulum: constraint undefined at the origin");
    return std::sqrt(s2);
}

ConstraintVector EllipticPendulum::constraint_impl(const Vector& q) const {
    return ConstraintVector::Constant(1, metric(q) - 1.0);
}

Jacobian EllipticPendulum::jacobian_impl(const Vector& q) const {
    const double s = metric(q);
    Jacobian G(1, 2);
    G << q(0) / s, params_.axis_ratio * q(1) / s;
    return G;
}

ConstraintVector EllipticPendulum::hessian_action_impl(const Vector& q, const Vector& p) const {
    const double a = params_.axis_ratio;
    const double s = metric(q);
    const double pAp = p(0) * p(0) + a * p(1) * p(1);
    const double pAq = p(0) * q(0) + a * p(1) * q(1);
    return ConstraintVector::Constant(1, pAp / s - pAq * pAq / (s * s * s));
}

double EllipticPendulum::potential_impl(const Vector& q) const {
    return params_.potential_gradient.dot(q.head<2>());
}

Vector EllipticPendulum::potential_gradient_impl(const Vector&) const {
    return Vector{{params_.potential_gradient(0), params_.potential_gradient(1)}};
}

std::optional<Vector> EllipticPendulum::frequency_gradient(const Vector& q) const {
    // w(q)^2 = (q^T A A q) / (q^T A q)
    const double a = params_.axis_ratio;
    const double num = q(0) * q(0) + a * a * q(1) * q(1);
    const double den = q(0) * q(0) + a * q(1) * q(1);
    if (!(den > 0.0))
        throw SingularConfiguration("elliptic_pendulum: frequency undefined at the origin");
    const double w = std::sqrt(num / den);
    const Eigen::Vector2d dnum(2.0 * q(0), 2.0 * a * a * q(1));
    const Eigen::Vector2d dden(2.0 * q(0), 2.0 * a * q(1));
    const Eigen::Vector2d dw2 = (dnum * den - num * dden) / (den * den);
    return Vector(dw2 / (2.0 * w));
}

// --- linear constraint systems --------------------------------------------

LinearConstraintSystem::LinearConstraintSystem(Jacobian C, ConstraintVector offset,
                                               ConstraintVector force_constants, double epsilon,
                                               DofMatrix stiffness, Vector linear_term,
                                               std::optional<LangevinParams> langevin,
                                               std::string name)
    : StiffSystem(static_cast<int>(C.cols()), std::move(force_constants), epsilon, langevin),
      C_(std::move(C)),
      offset_(std::move(offset)),
      stiffness_(std::move(stiffness)),
      linear_term_(std::move(linear_term)),
      name_(std::move(name)) {
    if (C_.rows() != n_constraints() || offset_.size() != n_constraints())
        throw DimensionError("LinearConstraintSystem: constraint shape mismatch");
    if (stiffness_.rows() != n_dof() || stiffness_.cols() != n_dof() ||
        linear_term_.size() != n_dof())
        throw DimensionError("LinearConstraintSystem: potential shape mismatch");
}

ConstraintVector LinearConstraintSystem::constraint_impl(const Vector& q) const {
    return C_ * q + offset_;
}

Jacobian LinearConstraintSystem::jacobian_impl(const Vector&) const { return C_; }

ConstraintVector LinearConstraintSystem::hessian_action_impl(const Vector&, const Vector&) const {
    return ConstraintVector::Zero(n_constraints());
}

double LinearConstraintSystem::potential_impl(const Vector& q) const {
    return 0.5 * q.dot(stiffness_ * q) + linear_term_.dot(q);
}

Vector LinearConstraintSystem::potential_gradient_impl(const Vector& q) const {
    return stiffness_ * q + linear_term_;
}

SystemPtr make_double_pendulum(const DoublePendulumParams& params) {
    return std::make_shared<DoublePendulum>(params);
}

SystemPtr make_elliptic_pendulum(const EllipticPendulumParams& params) {
    return std::make_shared<EllipticPendulum>(params);
}

SystemPtr make_harmonic_oscillator(double K) {
    Jacobian C = Jacobian::Ones(1, 1);
    return std::make_shared<LinearConstraintSystem>(
        C, ConstraintVector::Zero(1), ConstraintVector::Constant(1, K), 1.0, DofMatrix::Zero(1, 1),
        Vector::Zero(1), std::nullopt, "harmonic_oscillator");
}

SystemPtr make_coupled_oscillator(double K) {
    Jacobian C(1, 2);
    C << 0.5, -0.5;
    DofMatrix S = DofMatrix::Zero(2, 2);
    S(1, 1) = 1.0;
    return std::make_shared<LinearConstraintSystem>(C, ConstraintVector::Zero(1),
                                                    ConstraintVector::Constant(1, 4.0 * K), 1.0, S,
                                                    Vector::Zero(2), std::nullopt,
                                                    "coupled_oscillator");
}

// --- operations -----------------------------------------------------------

ConstraintVector solve_gram(const Jacobian& G, const ConstraintVector& rhs) {
    const ConstraintMatrix gram = G * G.transpose();
    Eigen::LLT<ConstraintMatrix> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond)
        throw SingularConfiguration("constraint Jacobian is rank deficient");
    return llt.solve(rhs);
}

ConstraintVector eval_constraint(const StiffSystem& system, const Vector& q) {
    return system.constraint(q);
}

Vector eval_stiff_force(const StiffSystem& system, const Vector& q) {
    const double inv_eps2 = 1.0 / (system.epsilon() * system.epsilon());
    const ConstraintVector Kg =
        system.force_constants().cwiseProduct(system.constraint(q));
    return -inv_eps2 * (system.jacobian(q).transpose() * Kg) - system.potential_gradient(q);
}

ConstraintVector lagrange_multiplier(const StiffSystem& system, const StateVector& z) {
    const Jacobian G = system.jacobian(z.q);
    const ConstraintVector rhs =
        system.hessian_action(z.q, z.p) - G * system.potential_gradient(z.q);
    // (G G^T K) lambda = rhs
    return solve_gram(G, rhs).cwiseQuotient(system.force_constants());
}

ConstraintVector soft_constraint_residual(const StiffSystem& system, const StateVector& z) {
    const double eps2 = system.epsilon() * system.epsilon();
    return system.constraint(z.q) - eps2 * lagrange_multiplier(system, z);
}

DofMatrix tangent_projector(const StiffSystem& system, const Vector& q) {
    const Jacobian G = system.jacobian(q);
    const ConstraintMatrix gram = G * G.transpose();
    Eigen::LLT<ConstraintMatrix> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond)
        throw SingularConfiguration("constraint Jacobian is rank deficient");
    const DofMatrix normal = G.transpose() * llt.solve(ConstraintMatrix(G));
    return DofMatrix::Identity(q.size(), q.size()) - normal;
}

Vector project_to_manifold(const StiffSystem& system, const Vector& q_in, double tol,
                           int max_iter) {
    Vector q = q_in;
    double residual = system.constraint(q).norm();
    int it = 0;
    while (residual > tol) {
        if (it == max_iter)
            throw ConvergenceError("projection onto the constraint manifold did not converge "
                                   "after " + std::to_string(it) + " iterations (|g| = " +
                                       std::to_string(residual) + ")",
                                   it, residual);
        const Jacobian G = system.jacobian(q);
        q -= G.transpose() * solve_gram(G, system.constraint(q));
        residual = system.constraint(q).norm();
        if (!std::isfinite(residual))
            throw ConvergenceError("projection onto the constraint manifold diverged", it,
                                   residual);
        ++it;
    }
    return q;
}

StateVector balance_initial_state(const StiffSystem& system, const StateVector& z_raw, double tol,
                                  int max_iter) {
    if (z_raw.dof() != system.n_dof())
        throw DimensionError("balance_initial_state: state dimension mismatch");
    Vector q = project_to_manifold(system, z_raw.q, tol, max_iter);
    Vector p = tangent_projector(system, q) * z_raw.p;
    return StateVector(std::move(q), std::move(p));
}

}  // namespace oscda
