#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "test_support.hpp"

using namespace oscda;
using namespace oscda::testing;

TEST_CASE("state vector rejects mismatched lengths") {
    CHECK_THROWS_AS(StateVector(vec({1, 2}), vec({1})), DimensionError);
    CHECK_THROWS_AS(StateVector(Vector(0), Vector(0)), DimensionError);
    const StateVector z(vec({1, 2}), vec({3, 4}));
    const StateVector back = StateVector::unflatten(z.flatten());
    CHECK(back.q == z.q);
    CHECK(back.p == z.p);
}

TEST_CASE("double pendulum constraint values") {
    const auto sys = make_double_pendulum();
    const ConstraintVector g = sys->constraint(vec({1, 0, 2, 0}));
    CHECK(g.norm() == doctest::Approx(0.0));
    CHECK_THROWS_AS(sys->constraint(vec({1, 0})), DimensionError);
}

TEST_CASE("double pendulum force on the manifold is gravity") {
    const auto sys = make_double_pendulum();
    const Vector f = eval_stiff_force(*sys, vec({1, 0, 2, 0}));
    CHECK(f(0) == doctest::Approx(0.0));
    CHECK(f(1) == doctest::Approx(-10.0));
    CHECK(f(2) == doctest::Approx(0.0));
    CHECK(f(3) == doctest::Approx(-10.0));
}

TEST_CASE("elliptic pendulum constraint values") {
    EllipticPendulumParams p;
    p.epsilon = 1.0;
    const auto sys = make_elliptic_pendulum(p);
    CHECK(sys->constraint(vec({0, 1.0 / 6.0}))(0) == doctest::Approx(0.0));
    CHECK(sys->constraint(vec({0, 1}))(0) == doctest::Approx(5.0));
    CHECK_THROWS_AS(sys->constraint(vec({0, 0})), SingularConfiguration);
}

TEST_CASE("elliptic pendulum stiff force by the chain rule") {
    EllipticPendulumParams p;
    p.epsilon = 1.0;
    const auto sys = make_elliptic_pendulum(p);
    // G(0, 1) = (0, 36) / 6 = (0, 6); force = -G^T * 5
    const Vector f = eval_stiff_force(*sys, vec({0, 1}));
    CHECK(f(0) == doctest::Approx(0.0));
    CHECK(f(1) == doctest::Approx(-30.0));
}

TEST_CASE("Jacobians match finite differences") {
    RandomStream rng(11);
    const auto dp = make_double_pendulum();
    const auto el = make_elliptic_pendulum();
    for (int i = 0; i < 100; ++i) {
        const Vector q = random_pendulum_q(rng);
        const Eigen::MatrixXd G = dp->jacobian(q);
        CHECK((G - fd_jacobian(*dp, q)).norm() <= 1e-6 * std::max(1.0, G.norm()));
        const Vector qe = random_ellipse_q(rng);
        const Eigen::MatrixXd Ge = el->jacobian(qe);
        CHECK((Ge - fd_jacobian(*el, qe)).norm() <= 1e-6 * std::max(1.0, Ge.norm()));
    }
}

TEST_CASE("constraint Hessian action matches finite differences") {
    RandomStream rng(12);
    const auto dp = make_double_pendulum();
    const auto el = make_elliptic_pendulum();
    for (int i = 0; i < 50; ++i) {
        const Vector q = random_pendulum_q(rng);
        Vector p(4);
        rng.fill_gaussian(p);
        const Eigen::VectorXd a = dp->hessian_action(q, p);
        CHECK((a - fd_second_derivative(*dp, q, p)).norm() <= 1e-4 * std::max(1.0, a.norm()));
        const Vector qe = random_ellipse_q(rng);
        Vector pe(2);
        rng.fill_gaussian(pe);
        const Eigen::VectorXd ae = el->hessian_action(qe, pe);
        CHECK((ae - fd_second_derivative(*el, qe, pe, 1e-5)).norm() <=
              1e-4 * std::max(1.0, ae.norm()));
    }
}

TEST_CASE("default finite-difference Hessian action on a linear constraint is zero") {
    const auto sys = make_coupled_oscillator(3.0);
    CHECK(sys->hessian_action(vec({0.3, -1}), vec({2, 5})).norm() <= 1e-8);
}

TEST_CASE("multiplier of a linear constraint is minus the potential slope") {
    // g(q) = q1, V = q^T S q / 2 + b^T q, so G grad V = (S q + b)_1
    Jacobian C(1, 2);
    C << 1, 0;
    DofMatrix S = DofMatrix::Zero(2, 2);
    S(0, 0) = 2.0;
    S(1, 1) = 1.0;
    const LinearConstraintSystem sys(C, ConstraintVector::Zero(1), ConstraintVector::Ones(1), 0.1,
                                     S, vec({0.5, -1}));
    const StateVector z(vec({0.25, 3}), vec({1, -2}));
    const double expected = -(2.0 * 0.25 + 0.5);
    CHECK(lagrange_multiplier(sys, z)(0) == doctest::Approx(expected));
}

TEST_CASE("multiplier vanishes without potential or momentum") {
    EllipticPendulumParams p;
    const auto sys = make_elliptic_pendulum(p);
    const StateVector z(vec({0.6, 0.1}), vec({0, 0}));
    CHECK(lagrange_multiplier(*sys, z).norm() == doctest::Approx(0.0));
}

TEST_CASE("multiplier residual is tiny on random states") {
    RandomStream rng(13);
    const auto dp = make_double_pendulum();
    for (int i = 0; i < 100; ++i) {
        const Vector q = random_pendulum_q(rng);
        Vector p(4);
        rng.fill_gaussian(p);
        const StateVector z(q, p);
        const ConstraintVector lam = lagrange_multiplier(*dp, z);
        const Jacobian G = dp->jacobian(q);
        const ConstraintVector res = G * dp->potential_gradient(q) +
                                     G * G.transpose() * dp->force_constants().asDiagonal() * lam -
                                     dp->hessian_action(q, p);
        CHECK(res.norm() <= 1e-10 * (1.0 + lam.norm()));
    }
}

TEST_CASE("soft residual equals g when the multiplier vanishes") {
    const auto sys = make_elliptic_pendulum();
    const StateVector z(vec({1.01, 0}), vec({0, 0}));
    CHECK(soft_constraint_residual(*sys, z)(0) == doctest::Approx(sys->constraint(z.q)(0)));
}

TEST_CASE("balancing projects onto the tangent manifold") {
    const auto dp = make_double_pendulum();
    const StateVector raw(vec({1.05, 0, 2.05, 0}), vec({0, 0, 0, 0}));
    const StateVector z = balance_initial_state(*dp, raw, 1e-12);
    CHECK(dp->constraint(z.q).norm() <= 1e-12);
    CHECK(z.p.norm() == 0.0);

    const auto el = make_elliptic_pendulum();
    const StateVector raw_e(vec({0, 0.2}), vec({0.3, 1.0}));
    const StateVector ze = balance_initial_state(*el, raw_e, 1e-12);
    CHECK(std::abs(el->constraint(ze.q)(0)) <= 1e-12);
    CHECK(std::abs((el->jacobian(ze.q) * ze.p)(0)) <= 1e-12);
}

TEST_CASE("balancing is idempotent") {
    RandomStream rng(14);
    const auto dp = make_double_pendulum();
    for (int i = 0; i < 20; ++i) {
        Vector p(4);
        rng.fill_gaussian(p);
        const StateVector z1 = balance_initial_state(*dp, StateVector(random_pendulum_q(rng), p), 1e-12);
        const StateVector z2 = balance_initial_state(*dp, z1, 1e-12);
        CHECK((z2.flatten() - z1.flatten()).norm() <= 1e-12);
    }
}

TEST_CASE("energy bound on the constraint") {
    // |g| <= sqrt(2 eps^2 H / min K) whenever V >= 0
    RandomStream rng(15);
    EllipticPendulumParams params;
    params.epsilon = 1e-2;
    const auto el = make_elliptic_pendulum(params);
    for (int i = 0; i < 100; ++i) {
        const Vector q = random_ellipse_q(rng);
        Vector p(2);
        rng.fill_gaussian(p);
        const ConstraintVector g = el->constraint(q);
        const double H = 0.5 * p.squaredNorm() + 0.5 * g.squaredNorm() / 1e-4;
        CHECK(g.norm() <= std::sqrt(2e-4 * H) * (1 + 1e-12));
    }
}

TEST_CASE("tangent projector is an orthogonal projector") {
    RandomStream rng(16);
    const auto dp = make_double_pendulum();
    for (int i = 0; i < 50; ++i) {
        const Vector q = random_pendulum_q(rng);
        const DofMatrix P = tangent_projector(*dp, q);
        CHECK((P * P - P).norm() <= 1e-12);
        CHECK((P - P.transpose()).norm() <= 1e-12);
        CHECK((P * dp->jacobian(q).transpose()).norm() <= 1e-12);
    }
}

TEST_CASE("rank loss is reported") {
    // both rods folded onto the origin
    const auto dp = make_double_pendulum();
    CHECK_THROWS_AS(tangent_projector(*dp, vec({1, 0, 1, 0})), Error);
}
