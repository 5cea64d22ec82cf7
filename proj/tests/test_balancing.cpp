#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "test_support.hpp"

#include "oscda/balancing.hpp"

using namespace oscda;
using namespace oscda::testing;

namespace {

DofMatrix random_spd(RandomStream& rng, int n, double scale = 0.01) {
    DofMatrix L(n, n);
    rng.fill_gaussian(L);
    return scale * (L * L.transpose() + 0.1 * DofMatrix::Identity(n, n));
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

SystemPtr linear_two_constraint_system() {
    Jacobian C(2, 4);
    C << 1, 2, 0, -1, 0, 1, 1, 1;
    return std::make_shared<LinearConstraintSystem>(C, ConstraintVector{{0.3, -0.2}},
                                                    ConstraintVector{{1.0, 0.04}}, 1e-3,
                                                    DofMatrix::Zero(4, 4), Vector::Zero(4));
}

SystemPtr thermal_ellipse() {
    EllipticPendulumParams p;
    p.langevin = LangevinParams{1.0, 16.0};
    return make_elliptic_pendulum(p);
}

}  // namespace

TEST_CASE("scalar penalty example") {
    const auto sys = make_harmonic_oscillator(1.0);
    PenaltyConfig cfg;
    cfg.weight = 1.0;
    cfg.newton_max_iter = 1;
    const DofMatrix B = DofMatrix::Ones(1, 1);
    CHECK(penalty_newton(*sys, vec({1}), cfg, B).q(0) == doctest::Approx(0.5));
    CHECK(penalty_linearized(*sys, vec({1}), cfg, B)(0) == doctest::Approx(0.5));
    CHECK(penalty_linearized_woodbury(*sys, vec({1}), cfg, B)(0) == doctest::Approx(0.5));
}

TEST_CASE("first Newton iterate equals both closed forms") {
    const auto sys = make_double_pendulum();
    RandomStream rng(1);
    for (int i = 0; i < 200; ++i) {
        const Vector q_hat = random_pendulum_q(rng);
        const DofMatrix B = random_spd(rng, 4);
        PenaltyConfig cfg;
        cfg.weight = std::pow(10.0, -2.0 + 8.0 * std::abs(std::fmod(rng.gaussian(), 1.0)));
        cfg.newton_max_iter = 1;
        const Vector newton = penalty_newton(*sys, q_hat, cfg, B).q;
        const Vector direct = penalty_linearized(*sys, q_hat, cfg, B);
        const Vector woodbury = penalty_linearized_woodbury(*sys, q_hat, cfg, B);
        CHECK(rel(newton, woodbury) <= 1e-10);
        CHECK(rel(direct, woodbury) <= 1e-10);
    }
}

TEST_CASE("vanishing weight leaves the analysis untouched") {
    const auto sys = make_double_pendulum();
    RandomStream rng(2);
    const Vector q_hat = random_pendulum_q(rng);
    const DofMatrix B = random_spd(rng, 4);
    PenaltyConfig cfg;
    cfg.weight = 0.0;
    CHECK(penalty_newton(*sys, q_hat, cfg, B).q == q_hat);
    cfg.weight = 1e-14;
    CHECK((penalty_newton(*sys, q_hat, cfg, B).q - q_hat).norm() <= 1e-12);
    CHECK((penalty_linearized_woodbury(*sys, q_hat, cfg, B) - q_hat).norm() <= 1e-12);
    cfg.weight = -1.0;
    CHECK_THROWS_AS(penalty_newton(*sys, q_hat, cfg, B), Error);
}

TEST_CASE("huge weight satisfies a linear constraint") {
    const auto sys = linear_two_constraint_system();
    RandomStream rng(3);
    for (int i = 0; i < 20; ++i) {
        Vector q_hat(4);
        rng.fill_gaussian(q_hat);
        const DofMatrix B = random_spd(rng, 4);
        PenaltyConfig cfg;
        cfg.weight = 1e14;
        const Vector q = penalty_linearized_woodbury(*sys, q_hat, cfg, B);
        CHECK(sys->constraint(q).norm() <= 1e-8);
    }
}

TEST_CASE("linearized update never worsens a linear constraint") {
    const auto sys = linear_two_constraint_system();
    const ConstraintVector sqrt_k = sys->force_constants().cwiseSqrt();
    RandomStream rng(4);
    for (int i = 0; i < 100; ++i) {
        Vector q_hat(4);
        rng.fill_gaussian(q_hat);
        const DofMatrix B = random_spd(rng, 4, 1.0);
        PenaltyConfig cfg;
        cfg.weight = std::pow(10.0, 4.0 * rng.gaussian());
        const Vector q = penalty_linearized(*sys, q_hat, cfg, B);
        CHECK(sqrt_k.cwiseProduct(sys->constraint(q)).norm() <=
              sqrt_k.cwiseProduct(sys->constraint(q_hat)).norm() + 1e-12);
    }
}

TEST_CASE("converged Newton runs lower the penalty functional") {
    const auto sys = make_double_pendulum();
    RandomStream rng(5);
    int converged = 0;
    for (int i = 0; i < 100; ++i) {
        const Vector q_hat = random_pendulum_q(rng);
        const DofMatrix B = random_spd(rng, 4);
        PenaltyConfig cfg;
        cfg.weight = std::pow(10.0, 1.0 + 5.0 * std::abs(std::fmod(rng.gaussian(), 1.0)));
        const PenaltyResult r = penalty_newton(*sys, q_hat, cfg, B);
        if (!r.converged) continue;
        ++converged;
        CHECK(penalty_cost(*sys, r.q, q_hat, B, cfg.weight) <=
              penalty_cost(*sys, q_hat, q_hat, B, cfg.weight) + 1e-12);
    }
    CHECK(converged > 90);
}

TEST_CASE("large weights balance a double pendulum ensemble") {
    const auto sys = make_double_pendulum();
    RandomStream rng(6);
    std::vector<StateVector> states;
    for (int i = 0; i < 20; ++i) {
        Vector q = vec({1, 0, 2, 0});
        Vector dq(4);
        rng.fill_gaussian(dq);
        states.emplace_back(Vector(q + 0.05 * dq), vec({0, 1, 0, 1}));
    }
    const Ensemble ens = Ensemble::from_states(states);
    PenaltyConfig cfg;
    cfg.weight = 1e6;
    int unconverged = -1;
    const Ensemble out = penalty_balance(*sys, ens, cfg, &unconverged);
    CHECK(unconverged == 0);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        CHECK(sys->constraint(out.member(i).q).norm() < 0.05 * sys->constraint(ens.member(i).q).norm());
        CHECK(out.member(i).p == ens.member(i).p);
    }

    cfg.project_momentum = true;
    const Ensemble proj = penalty_balance(*sys, ens, cfg);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const StateVector z = proj.member(i);
        CHECK((sys->jacobian(z.q) * z.p).norm() <= 1e-12);
    }
}

TEST_CASE("background regularization") {
    DofMatrix good(2, 2);
    good << 2, 0.5, 0.5, 1;
    CHECK(regularized_background(good) == good);
    DofMatrix singular(2, 2);
    singular << 1, 1, 1, 1;
    const DofMatrix fixed = regularized_background(singular);
    Eigen::SelfAdjointEigenSolver<DofMatrix> eig(fixed);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK((fixed - singular).norm() <= 1e-9);
}

TEST_CASE("pseudo-observation balance") {
    const auto sys = thermal_ellipse();
    RandomStream rng(7);
    std::vector<StateVector> on, off;
    for (int i = 0; i < 10; ++i) {
        const double t = 0.3 * i;
        const Vector q = vec({std::cos(t), std::sin(t) / 6.0});
        on.emplace_back(q, vec({rng.gaussian(), rng.gaussian()}));
        off.emplace_back(Vector(q * (1.0 + 0.01 * rng.gaussian())), vec({rng.gaussian(), 1.0}));
    }
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 10);

    SUBCASE("balanced members without noise stay put") {
        const Ensemble ens = Ensemble::from_states(on);
        const Ensemble out = pseudo_obs_balance(*sys, ens, zero);
        CHECK((out.matrix() - ens.matrix()).norm() <= 1e-12);
    }
    SUBCASE("momenta pass through bit-exactly") {
        const Ensemble ens = Ensemble::from_states(off);
        const Ensemble out = pseudo_obs_balance(*sys, ens, rng);
        CHECK(out.momenta() == ens.momenta());
        CHECK(out.positions() != ens.positions());
    }
    SUBCASE("noise-free update equals the penalty form with weight 1/(k_B T eps^2)") {
        const Ensemble ens = Ensemble::from_states(off);
        const Ensemble out = pseudo_obs_balance(*sys, ens, zero);
        const Eigen::MatrixXd Q = ens.positions().colwise() - ens.positions().rowwise().mean();
        const DofMatrix B = regularized_background(DofMatrix(Q * Q.transpose() / 9.0));
        PenaltyConfig cfg;
        cfg.weight = 1.0 / (16.0 * 1e-6);
        for (Eigen::Index i = 0; i < ens.size(); ++i) {
            const Vector expected = penalty_linearized_woodbury(*sys, ens.member(i).q, cfg, B);
            CHECK(rel(out.member(i).q, expected) <= 1e-10);
        }
    }
    SUBCASE("needs a thermal system") {
        EllipticPendulumParams p;
        const Ensemble ens = Ensemble::from_states(off);
        CHECK_THROWS_AS(pseudo_obs_balance(*make_elliptic_pendulum(p), ens, zero), Error);
        CHECK_THROWS_AS(pseudo_obs_balance(*sys, ens, Eigen::MatrixXd::Zero(1, 3)), DimensionError);
    }
}
