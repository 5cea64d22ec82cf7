// Acceptance checks. One PASS/FAIL line per criterion; pass criterion names
// as arguments to run a subset. Exit status is non-zero if any selected
// criterion fails.

#include "oscda/experiments.hpp"
#include "oscda/stability.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

using namespace oscda;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

template <class... Args>
std::string fmtn(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::filesystem::path preset(const std::string& name) {
    return std::filesystem::path(OSCDA_SOURCE_DIR) / "presets" / name;
}

Vector pendulum_q(double a, double b) {
    Vector q(4);
    q << std::sin(a), -std::cos(a), std::sin(a) + std::sin(b), -std::cos(a) - std::cos(b);
    return q;
}

// ---------------------------------------------------------------------------

Outcome kalman_oracle() {
    RandomStream rng(2024);
    double worst_mean = 0.0, worst_cov = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.engine()() % 4);
        const int l = 1 + static_cast<int>(rng.engine()() % 4);
        const int m = 3 + static_cast<int>(rng.engine()() % 8);
        Eigen::MatrixXd X(2 * n, m), H(l, 2 * n), y(l, 1);
        rng.fill_gaussian(X);
        rng.fill_gaussian(H);
        rng.fill_gaussian(y);
        const ObservationModel obs{H, 0.05 + std::abs(rng.gaussian()), 1.0};
        const Ensemble ens(X);
        const Ensemble post = esrf_analysis(ens, obs, y.col(0));

        // textbook formulas with explicit inverses
        const Eigen::VectorXd mf = X.rowwise().mean();
        const Eigen::MatrixXd A = X.colwise() - mf;
        const Eigen::MatrixXd Pf = A * A.transpose() / (m - 1);
        const Eigen::MatrixXd R = obs.rho * Eigen::MatrixXd::Identity(l, l);
        const Eigen::MatrixXd K = Pf * H.transpose() * (H * Pf * H.transpose() + R).inverse();
        const Eigen::VectorXd ma = mf - K * (H * mf - y.col(0));
        const Eigen::MatrixXd Pa = Pf - K * H * Pf;

        worst_mean = std::max(worst_mean, (post.mean() - ma).norm() / std::max(1.0, ma.norm()));
        worst_cov = std::max(worst_cov, (post.covariance() - Pa).norm() / std::max(1.0, Pa.norm()));
    }
    return {worst_mean <= 1e-8 && worst_cov <= 1e-8,
            fmtn("200 instances, max rel err mean %.2e cov %.2e (tol 1e-8)", worst_mean, worst_cov)};
}

Outcome tangential_method() {
    const auto sys = make_double_pendulum();
    RandomStream rng(77);

    double worst_sym = 0.0;
    for (int i = 0; i < 200; ++i) {
        Vector p(4);
        rng.fill_gaussian(p);
        const StateVector raw(pendulum_q(2 * rng.gaussian(), 2 * rng.gaussian()), 3.0 * p);
        const StateVector z = balance_initial_state(*sys, raw, 1e-13);
        const double h = 1e-2 * (1 + std::abs(rng.gaussian()));
        const StateVector back =
            tangential_momentum_step(*sys, tangential_momentum_step(*sys, z, h), -h);
        worst_sym =
            std::max(worst_sym, (back.flatten() - z.flatten()).norm() / (1 + z.flatten().norm()));
    }

    const StateVector z0 = balance_initial_state(
        *sys, StateVector(pendulum_q(0.7, -0.4), Vector(Eigen::Vector4d(1.0, 0.5, -0.5, 2.0))),
        1e-14);
    double worst_hidden = 0.0;
    auto run = [&](double h, bool tangential) {
        StateVector z = z0;
        const int n = static_cast<int>(std::lround(1.0 / h));
        for (int k = 0; k < n; ++k) {
            z = tangential ? tangential_momentum_step(*sys, z, h) : rattle_step(*sys, z, h);
            if (tangential)
                worst_hidden = std::max(worst_hidden, (sys->jacobian(z.q) * z.p).norm());
        }
        return z;
    };
    const StateVector ref = run(std::ldexp(1.0, -14), true);
    const StateVector ref_r = run(std::ldexp(1.0, -14), false);
    std::vector<double> hs, errs, errs_r;
    for (int e = 6; e <= 10; ++e) {
        const double h = std::ldexp(1.0, -e);
        hs.push_back(h);
        errs.push_back((run(h, true).flatten() - ref.flatten()).norm());
        errs_r.push_back((run(h, false).flatten() - ref_r.flatten()).norm());
    }
    const double slope = loglog_slope(hs, errs);
    const double slope_r = loglog_slope(hs, errs_r);
    const bool ok = worst_sym <= 1e-10 && worst_hidden <= 1e-10 && std::abs(slope - 2.0) <= 0.1;
    return {ok, fmtn("symmetry defect %.2e, max |Gp| %.2e, order slope %.3f (RATTLE %.3f)",
                     worst_sym, worst_hidden, slope, slope_r)};
}

Outcome harmonic_spectra() {
    double worst = 0.0, worst_radius = 0.0;
    for (int i = 1; i <= 50; ++i)
        for (int j = 0; j < 50; ++j) {
            const double kh2 = 2.0 * i / 51.0;  // inside (0, 2)
            const double a = j / 49.0;
            const LinearFlowReport r = eigen_report(harmonic_flow_matrix(kh2, 1.0, a));
            const double d = kh2 * kh2 * a * a - 2 * kh2 * a * a - 2 * kh2 * a + a * a - 2 * a + 1;
            const double tr = (1 + a) - kh2 * a;  // sum of the printed eigenvalues
            worst = std::max({worst, std::abs(r.trace - tr), std::abs(r.determinant - a),
                              std::abs(*r.discriminant - d)});
            worst_radius = std::max(worst_radius, r.spectral_radius);
        }
    const auto [am, ap] = alpha_pm_kh2(1.0);
    const bool ok = worst <= 1e-10 && am == 0.25 && ap == 0.25 && worst_radius <= 1 + 1e-12;
    return {ok, fmtn("50x50 grid max dev %.2e, alpha_pm(1) = (%.17g, %.17g), max radius 1%+.2e",
                     worst, am, ap, worst_radius - 1.0)};
}

Outcome balance_scaling() {
    std::vector<double> eps_list{1e-2, 3e-3, 1e-3}, g_avg, gt_avg;
    for (double eps : eps_list) {
        DoublePendulumParams p;
        p.epsilon = eps;
        const auto sys = make_double_pendulum(p);
        StateVector z = balance_initial_state(
            *sys, StateVector(pendulum_q(M_PI / 2, M_PI / 2), Vector(Vector::Zero(4))), 1e-14);
        const double h = 1e-3;
        const int n = 20000;
        double sg = 0.0, sgt = 0.0;
        for (int k = 0; k < n; ++k) {
            z = stormer_verlet_step(*sys, z, h);
            sg += sys->constraint(z.q).norm();
            sgt += soft_constraint_residual(*sys, z).norm();
        }
        g_avg.push_back(sg / n);
        gt_avg.push_back(sgt / n);
    }
    const double slope = loglog_slope(eps_list, g_avg);
    const bool ok = std::abs(slope - 2.0) <= 0.25 && gt_avg.back() <= g_avg.back();
    return {ok, fmtn("<|g|> = %.3e, %.3e, %.3e; slope %.3f; at eps 1e-3 <|g~|> %.3e vs <|g|> %.3e",
                     g_avg[0], g_avg[1], g_avg[2], slope, gt_avg.back(), g_avg.back())};
}

Outcome action_dichotomy() {
    ExperimentConfig cfg = ExperimentConfig::load(preset("fig6_elliptic.cfg"));
    const auto sv = simulate_free(cfg);
    cfg.integrator = FreeIntegrator::rattle;
    const auto rattle = simulate_free(cfg);
    double sv_mean = 0.0, sv_min = 1e300, rattle_max = 0.0;
    for (const auto& s : sv) {
        sv_mean += s.action;
        sv_min = std::min(sv_min, s.action);
    }
    sv_mean /= static_cast<double>(sv.size());
    for (std::size_t i = 1; i < rattle.size(); ++i)
        rattle_max = std::max(rattle_max, std::abs(rattle[i].action));
    const bool ok = rattle_max < 1e-3 * sv_mean && sv_mean >= 0.1 && sv_mean <= 10.0;
    return {ok, fmtn("SV <J> = %.4f (min %.4f), RATTLE max |J| = %.2e after the first step",
                     sv_mean, sv_min, rattle_max)};
}

Outcome scenario_a() {
    ExperimentConfig base = ExperimentConfig::load(preset("table1_desk.cfg"));
    const ReferenceRun ref = generate_reference(base);
    RandomStream obs_rng(base.seed, 2);
    const auto ys = generate_observations(ref, make_observation_model(base), obs_rng);
    RunOptions opts;
    opts.reference = &ref;
    opts.observations = &ys;

    ExperimentConfig none = base;
    none.balancing = BalancingMethod::none;
    const MetricsRecord a_none = run_twin_experiment(none, opts).metrics.time_average();

    ExperimentConfig pen = base;
    pen.balancing = BalancingMethod::penalty;
    pen.penalty_weight = 1e6;
    const MetricsRecord a_pen = run_twin_experiment(pen, opts).metrics.time_average();

    bool ok = a_none.mean_Hosc >= 1e2 * a_pen.mean_Hosc;
    std::string detail = fmtn("Hosc none %.3g vs penalty(1e6) %.3g (ratio %.3g); RMSE q/p_tan penalty "
                              "%.4f/%.4f",
                              a_none.mean_Hosc, a_pen.mean_Hosc, a_none.mean_Hosc / a_pen.mean_Hosc,
                              a_pen.rmse_q, a_pen.rmse_p_tan);
    for (int w : {5, 10, 20}) {
        ExperimentConfig bl = base;
        bl.balancing = BalancingMethod::blending;
        bl.blend_window = w;
        const MetricsRecord a = run_twin_experiment(bl, opts).metrics.time_average();
        const double rq = a.rmse_q / a_pen.rmse_q, rp = a.rmse_p_tan / a_pen.rmse_p_tan;
        ok = ok && rq <= 2.0 && rp <= 2.0;
        detail += fmtn("; window %d %.4f/%.4f", w, a.rmse_q, a.rmse_p_tan);
    }
    return {ok, detail};
}

Outcome scenario_b() {
    const ExperimentConfig base = ExperimentConfig::load(preset("table2_desk.cfg"));
    const int n_seeds = 5;
    MetricsRecord pseudo, plain;
    std::string per_seed;
    for (int s = 1; s <= n_seeds; ++s) {
        ExperimentConfig c = base;
        c.seed = static_cast<std::uint64_t>(s);
        const MetricsRecord a = run_twin_experiment(c).metrics.time_average();
        c.balancing = BalancingMethod::none;
        const MetricsRecord b = run_twin_experiment(c).metrics.time_average();
        pseudo.rmse_q += a.rmse_q / n_seeds;
        pseudo.rmse_p_tan += a.rmse_p_tan / n_seeds;
        pseudo.mean_J += a.mean_J / n_seeds;
        plain.rmse_q += b.rmse_q / n_seeds;
        plain.rmse_p_tan += b.rmse_p_tan / n_seeds;
        per_seed += fmtn(" [seed %d: %.4f %.3f %.2f | %.3f %.2f]", s, a.rmse_q, a.rmse_p_tan,
                         a.mean_J, b.rmse_q, b.rmse_p_tan);
    }
    auto within = [](double v, double target) { return std::abs(v - target) <= 0.5 * target; };
    const bool ok = within(pseudo.rmse_q, 0.02) && within(pseudo.rmse_p_tan, 0.83) &&
                    within(pseudo.mean_J, 7.45) && plain.rmse_q >= 5 * pseudo.rmse_q &&
                    plain.rmse_p_tan >= 5 * pseudo.rmse_p_tan;
    return {ok, fmtn("seed mean: RMSE q %.4f (0.02+-50%%), p_tan %.3f (0.83+-50%%), J %.3f "
                     "(7.45+-50%%); baseline ratios q %.1f p %.1f (>= 5);",
                     pseudo.rmse_q, pseudo.rmse_p_tan, pseudo.mean_J,
                     plain.rmse_q / pseudo.rmse_q, plain.rmse_p_tan / pseudo.rmse_p_tan) +
                    per_seed};
}

Outcome coupled_blending() {
    const CoupledBlendingSetup setup;
    const CoupledBlendingRun run = coupled_blending_run(setup);
    double x_after = 0.0, y_err = 0.0, dev_manifold = 0.0;
    for (std::size_t n = 0; n < run.time.size(); ++n) {
        y_err = std::max(y_err, std::abs(run.blended[n].y - run.reference[n].y));
        if (static_cast<int>(n) < setup.window) continue;
        x_after = std::max(x_after, std::abs(run.blended[n].x));
        const double x_slow = run.blended[n].y / (4 * setup.K + 1);
        dev_manifold = std::max(dev_manifold, std::abs(run.blended[n].x - x_slow));
    }
    const bool ok = x_after < 1e-3 * std::abs(setup.x0) && y_err <= 0.1 * std::abs(setup.y0);
    return {ok, fmtn("max |x| after window %.3e (limit %.1e), max |x - y/(4K+1)| %.3e, "
                     "max |y - y_ref| %.3e (limit %.2g)",
                     x_after, 1e-3 * std::abs(setup.x0), dev_manifold, y_err,
                     0.1 * std::abs(setup.y0))};
}

struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double time_limit;  // seconds
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {"kalman_oracle", kalman_oracle, 10},
        {"tangential_method", tangential_method, 60},
        {"harmonic_spectra", harmonic_spectra, 10},
        {"balance_scaling", balance_scaling, 120},
        {"action_dichotomy", action_dichotomy, 120},
        {"scenario_a_desk", scenario_a, 600},
        {"scenario_b_desk", scenario_b, 900},
        {"coupled_blending", coupled_blending, 10},
    };
    std::vector<std::string> selected(argv + 1, argv + argc);
    for (const auto& s : selected) {
        bool known = false;
        for (const auto& c : criteria) known = known || s == c.name;
        if (!known) {
            std::fprintf(stderr, "unknown criterion '%s'\n", s.c_str());
            return 2;
        }
    }

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() &&
            std::find(selected.begin(), selected.end(), c.name) == selected.end())
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.time_limit) {
            o.pass = false;
            o.detail += fmtn(" (over the %.0f s budget)", c.time_limit);
        }
        std::printf("%s %-18s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
