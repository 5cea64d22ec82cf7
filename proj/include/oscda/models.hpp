#pragma once

#include "oscda/types.hpp"

#include <memory>
#include <optional>
#include <string>

namespace oscda {

struct LangevinParams {
    double gamma = 0.0;  // friction
    double kbt = 1.0;    // thermal energy k_B T
};

/// Stiff mechanical system with unit mass matrix
///
///   H(q, p) = |p|^2 / 2 + g(q)^T K g(q) / (2 eps^2) + V(q)
///
/// where g : R^N -> R^L collects the stiff constraints and K is diagonal.
/// Instances are immutable after construction; all evaluations are pure.
class StiffSystem {
public:
    StiffSystem(int n_dof, ConstraintVector force_constants, double epsilon,
                std::optional<LangevinParams> langevin = std::nullopt);
    virtual ~StiffSystem() = default;

    StiffSystem(const StiffSystem&) = delete;
    StiffSystem& operator=(const StiffSystem&) = delete;

    int n_dof() const { return n_dof_; }
    int n_constraints() const { return static_cast<int>(force_constants_.size()); }
    double epsilon() const { return epsilon_; }
    const ConstraintVector& force_constants() const { return force_constants_; }
    const std::optional<LangevinParams>& langevin() const { return langevin_; }

    virtual std::string name() const = 0;

    // Dimension-checked evaluators.
    ConstraintVector constraint(const Vector& q) const;
    Jacobian jacobian(const Vector& q) const;
    /// Second directional derivative g_qq(q)[p, p].
    ConstraintVector hessian_action(const Vector& q, const Vector& p) const;
    double potential(const Vector& q) const;
    Vector potential_gradient(const Vector& q) const;

    /// Gradient of the eps-free normal frequency |G(q)| for L = 1 systems, when
    /// the model knows it in closed form.
    virtual std::optional<Vector> frequency_gradient(const Vector& q) const;

protected:
    virtual ConstraintVector constraint_impl(const Vector& q) const = 0;
    virtual Jacobian jacobian_impl(const Vector& q) const = 0;
    /// Default: central finite differences of the Jacobian along p.
    virtual ConstraintVector hessian_action_impl(const Vector& q, const Vector& p) const;
    virtual double potential_impl(const Vector& q) const = 0;
    virtual Vector potential_gradient_impl(const Vector& q) const = 0;

private:
    void check_dof(const Vector& v, const char* what) const;

    int n_dof_;
    ConstraintVector force_constants_;
    double epsilon_;
    std::optional<LangevinParams> langevin_;
};

using SystemPtr = std::shared_ptr<const StiffSystem>;

struct DoublePendulumParams {
    double l1 = 1.0;
    double l2 = 1.0;
    double gravity = 10.0;
    double k1 = 1.0;
    double k2 = 0.04;
    double epsilon = 1e-3;
};

/// Elastic double pendulum in the plane: q = (x1, y1, x2, y2),
/// g(q) = (|q_{1,2}| - l1, |q_{1,2} - q_{3,4}| - l2), V(q) = g0 (q2 + q4).
class DoublePendulum final : public StiffSystem {
public:
    explicit DoublePendulum(const DoublePendulumParams& params);

    std::string name() const override { return "double_pendulum"; }
    const DoublePendulumParams& params() const { return params_; }

protected:
    ConstraintVector constraint_impl(const Vector& q) const override;
    Jacobian jacobian_impl(const Vector& q) const override;
    ConstraintVector hessian_action_impl(const Vector& q, const Vector& p) const override;
    double potential_impl(const Vector& q) const override;
    Vector potential_gradient_impl(const Vector& q) const override;

private:
    DoublePendulumParams params_;
};

struct EllipticPendulumParams {
    double axis_ratio = 36.0;  // A = diag(1, axis_ratio)
    double epsilon = 1e-3;
    double force_constant = 1.0;
    /// Linear potential V(q) = c . q; zero by default.
    Eigen::Vector2d potential_gradient = Eigen::Vector2d::Zero();
    std::optional<LangevinParams> langevin;
};

/// g(q) = sqrt(q^T A q) - 1 with A = diag(1, a). Undefined at q = 0.
class EllipticPendulum final : public StiffSystem {
public:
    explicit EllipticPendulum(const EllipticPendulumParams& params);

    std::string name() const override { return "elliptic_pendulum"; }
    const EllipticPendulumParams& params() const { return params_; }

    std::optional<Vector> frequency_gradient(const Vector& q) const override;

protected:
    ConstraintVector constraint_impl(const Vector& q) const override;
    Jacobian jacobian_impl(const Vector& q) const override;
    ConstraintVector hessian_action_impl(const Vector& q, const Vector& p) const override;
    double potential_impl(const Vector& q) const override;
    Vector potential_gradient_impl(const Vector& q) const override;

private:
    double metric(const Vector& q) const;  // sqrt(q^T A q), throws at the origin
    EllipticPendulumParams params_;
};

/// Affine constraints g(q) = C q + c with quadratic potential
/// V(q) = q^T S q / 2 + b^T q. Used for the harmonic test oscillators.
class LinearConstraintSystem final : public StiffSystem {
public:
    LinearConstraintSystem(Jacobian C, ConstraintVector offset, ConstraintVector force_constants,
                           double epsilon, DofMatrix stiffness, Vector linear_term,
                           std::optional<LangevinParams> langevin = std::nullopt,
                           std::string name = "linear_constraint");

    std::string name() const override { return name_; }

protected:
    ConstraintVector constraint_impl(const Vector& q) const override;
    Jacobian jacobian_impl(const Vector& q) const override;
    ConstraintVector hessian_action_impl(const Vector& q, const Vector& p) const override;
    double potential_impl(const Vector& q) const override;
    Vector potential_gradient_impl(const Vector& q) const override;

private:
    Jacobian C_;
    ConstraintVector offset_;
    DofMatrix stiffness_;
    Vector linear_term_;
    std::string name_;
};

SystemPtr make_double_pendulum(const DoublePendulumParams& params = {});
SystemPtr make_elliptic_pendulum(const EllipticPendulumParams& params = {});

/// H = K q^2 / 2 + p^2 / 2 written as g(q) = q, eps = 1, force constant K, V = 0.
SystemPtr make_harmonic_oscillator(double K);

/// H = |p|^2/2 + K (q1 - q2)^2 / 2 + q2^2 / 2 with stiff constraint
/// g(q) = (q1 - q2) / 2 (force constant 4K) and the q2 spring as slow potential.
SystemPtr make_coupled_oscillator(double K);

// --- operations -----------------------------------------------------------

ConstraintVector eval_constraint(const StiffSystem& system, const Vector& q);

/// -eps^-2 G(q)^T K g(q) - grad V(q)
Vector eval_stiff_force(const StiffSystem& system, const Vector& q);

/// Multiplier of the constrained limit system: solves
/// G [grad V + G^T K lambda] = g_qq[p, p].
ConstraintVector lagrange_multiplier(const StiffSystem& system, const StateVector& z);

/// g(q) - eps^2 lambda(q, p)
ConstraintVector soft_constraint_residual(const StiffSystem& system, const StateVector& z);

/// Orthogonal projector onto the tangent space of {g = 0} at q:
/// I - G^T (G G^T)^{-1} G.
DofMatrix tangent_projector(const StiffSystem& system, const Vector& q);

/// Gauss-Newton projection of q onto {g = 0} (minimum-norm corrections).
Vector project_to_manifold(const StiffSystem& system, const Vector& q, double tol,
                           int max_iter = 50);

/// Maps a raw state onto the tangent manifold {g = 0, G p = 0}.
StateVector balance_initial_state(const StiffSystem& system, const StateVector& z_raw,
                                  double tol, int max_iter = 50);

/// Solves (G G^T) x = rhs, throwing SingularConfiguration on rank loss.
ConstraintVector solve_gram(const Jacobian& G, const ConstraintVector& rhs);

}  // namespace oscda
