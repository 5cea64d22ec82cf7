#include "oscda/stability.hpp"

#include "oscda/integrators.hpp"

#include <algorithm>
#include <cmath>

namespace oscda {

LinearFlowReport eigen_report(const Eigen::MatrixXd& matrix) {
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
        throw DimensionError("eigen_report: matrix must be square");
    LinearFlowReport r;
    r.matrix = matrix;
    Eigen::EigenSolver<Eigen::MatrixXd> es(matrix, false);
    if (es.info() != Eigen::Success) throw Error("eigen_report: eigensolver failed");
    r.eigenvalues = es.eigenvalues();
    std::sort(r.eigenvalues.data(), r.eigenvalues.data() + r.eigenvalues.size(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                  if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
                  return a.imag() > b.imag();
              });
    r.spectral_radius = std::abs(r.eigenvalues(0));
    r.determinant = matrix.determinant();
    r.trace = matrix.trace();
    if (matrix.rows() == 2) r.discriminant = r.trace * r.trace - 4.0 * r.determinant;
    return r;
}

Eigen::MatrixXd extract_flow_matrix(const StiffSystem& system, double h, double alpha) {
    const int n = system.n_dof();
    Eigen::MatrixXd A(2 * n, 2 * n);
    for (int j = 0; j < 2 * n; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(2 * n);
        e(j) = 1.0;
        A.col(j) = blended_step(system, StateVector::unflatten(e), h, alpha).flatten();
    }
    return A;
}

Eigen::MatrixXd harmonic_flow_matrix(double K, double h, double alpha) {
    if (!(K > 0.0 && h > 0.0)) throw Error("harmonic_flow_matrix: K and h must be positive");
    return extract_flow_matrix(*make_harmonic_oscillator(K), h, alpha);
}

Eigen::Matrix2d closed_form_harmonic_flow_matrix(double K, double h, double alpha,
                                                 double cubic_sign) {
    const double a = alpha;
    Eigen::Matrix2d A;
    A << 1.0 - a * K * h * h / 2.0, (1.0 + a) * h / 2.0 + cubic_sign * a * K * h * h * h / 4.0,
        -a * K * h, a - a * K * h * h / 2.0;
    return A;
}

double harmonic_discriminant(double kh2, double a) {
    return kh2 * kh2 * a * a - 2.0 * kh2 * a * a - 2.0 * kh2 * a + a * a - 2.0 * a + 1.0;
}

std::pair<std::complex<double>, std::complex<double>> harmonic_eigenvalues(double kh2,
                                                                           double alpha) {
    const double centre = (1.0 + alpha) / 2.0 - kh2 * alpha / 2.0;
    const std::complex<double> root = std::sqrt(std::complex<double>(harmonic_discriminant(kh2, alpha)));
    return {centre + 0.5 * root, centre - 0.5 * root};
}

std::pair<double, double> alpha_pm_kh2(double kh2) {
    if (!(kh2 > 0.0)) throw Error("alpha_pm: K h^2 must be positive");
    if (kh2 == 1.0) return {0.25, 0.25};
    const double denom = (kh2 - 1.0) * (kh2 - 1.0);
    const double s = 2.0 * std::sqrt(kh2);
    return {(kh2 + 1.0 - s) / denom, (kh2 + 1.0 + s) / denom};
}

std::pair<double, double> alpha_pm(double K, double h) { return alpha_pm_kh2(K * h * h); }

Eigen::MatrixXd coupled_flow_matrix(double K, double h, double alpha) {
    if (!(K > 0.0 && h > 0.0)) throw Error("coupled_flow_matrix: K and h must be positive");
    return extract_flow_matrix(*make_coupled_oscillator(K), h, alpha);
}

Eigen::Matrix4d closed_form_coupled_flow_matrix(double K, double h, double a) {
    const double h2 = h * h;
    const double h3 = h2 * h;
    const double Ka = K * a;
    Eigen::Matrix4d A;
    A(0, 0) = Ka / 2 * h2 + 1;
    A(0, 1) = Ka / 2 * h2 + a * h2 / 4 - h2 / 4;
    A(0, 2) = -Ka / 4 * h3 + a * h / 4 + 3 * h / 4;
    A(0, 3) = Ka / 4 * h3 + a * h3 / 8 - a * h / 4 - h3 / 8 + h / 4;

    A(1, 0) = Ka / 2 * h2;
    A(1, 1) = -Ka / 2 * h2 - a * h2 / 4 - h2 / 4 + 1;
    A(1, 2) = Ka / 4 * h3 - a * h / 4 + h / 4;
    A(1, 3) = -Ka / 4 * h3 - a * h3 / 8 + a * h / 4 - h3 / 8 + 3 * h / 4;

    A(2, 0) = -Ka * h;
    A(2, 1) = Ka * h + a * h / 2 - h / 2;
    A(2, 2) = -Ka / 2 * h2 + a / 2 + 0.5;
    A(2, 3) = Ka / 2 * h2 + a * h2 / 4 - a / 2 - h2 / 4 + 0.5;

    A(3, 0) = Ka * h;
    A(3, 1) = -Ka * h - a * h / 2 - h / 2;
    A(3, 2) = Ka / 2 * h2 - a / 2 + 0.5;
    A(3, 3) = -Ka / 2 * h2 - a * h2 / 4 + a / 2 - h2 / 4 + 0.5;
    return A;
}

MatrixComparison compare_matrices(const Eigen::MatrixXd& extracted,
                                  const Eigen::MatrixXd& reference, double tol) {
    if (extracted.rows() != reference.rows() || extracted.cols() != reference.cols())
        throw DimensionError("compare_matrices: shape mismatch");
    MatrixComparison c;
    c.deviation = reference - extracted;
    c.max_abs_deviation = c.deviation.cwiseAbs().maxCoeff();
    for (int i = 0; i < c.deviation.rows(); ++i)
        for (int j = 0; j < c.deviation.cols(); ++j)
            if (std::abs(c.deviation(i, j)) > tol) c.mismatched.emplace_back(i, j);
    return c;
}

FastSlowState fast_slow_transform(const Eigen::Vector2d& q, const Eigen::Vector2d& p) {
    return {0.5 * (q(0) - q(1)), 0.5 * (q(0) + q(1)), p(0) - p(1), p(0) + p(1)};
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> inverse_fast_slow_transform(const FastSlowState& s) {
    return {Eigen::Vector2d(s.y + s.x, s.y - s.x),
            Eigen::Vector2d(0.5 * (s.p_y + s.p_x), 0.5 * (s.p_y - s.p_x))};
}

std::vector<HarmonicScanRow> scan_harmonic(const std::vector<double>& kh2_values,
                                           const std::vector<double>& alphas) {
    std::vector<HarmonicScanRow> rows;
    rows.reserve(kh2_values.size() * alphas.size());
    for (double kh2 : kh2_values) {
        const auto [am, ap] = alpha_pm_kh2(kh2);
        for (double a : alphas) {
            const LinearFlowReport rep = eigen_report(harmonic_flow_matrix(kh2, 1.0, a));
            HarmonicScanRow row;
            row.kh2 = kh2;
            row.alpha = a;
            row.abs_lambda1 = std::abs(rep.eigenvalues(0));
            row.abs_lambda2 = std::abs(rep.eigenvalues(1));
            row.discriminant = harmonic_discriminant(kh2, a);
            row.regime = row.discriminant < 0.0 ? "spiral" : "node";
            row.alpha_minus = am;
            row.alpha_plus = ap;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<CoupledScanRow> scan_coupled(double K, double h, const std::vector<double>& alphas) {
    std::vector<CoupledScanRow> rows;
    rows.reserve(alphas.size());
    for (double a : alphas) {
        const LinearFlowReport rep = eigen_report(coupled_flow_matrix(K, h, a));
        CoupledScanRow row;
        row.alpha = a;
        for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i)
            row.abs_lambda.push_back(std::abs(rep.eigenvalues(i)));
        rows.push_back(std::move(row));
    }
    return rows;
}

CoupledBlendingRun coupled_blending_run(const CoupledBlendingSetup& setup) {
    if (setup.window < 2 || setup.steps < setup.window)
        throw Error("coupled_blending_run: need 2 <= window <= steps");
    const SystemPtr system = make_coupled_oscillator(setup.K);
    const BlendSchedule schedule = BlendSchedule::ramp(setup.window, setup.steps);

    FastSlowState start;
    start.x = setup.x0;
    start.y = setup.y0;
    auto [q0, p0] = inverse_fast_slow_transform(start);
    StateVector z{Vector(q0), Vector(p0)};
    StateVector ref = balance_initial_state(*system, z, 1e-14);

    CoupledBlendingRun run;
    auto record = [&](double t) {
        run.time.push_back(t);
        run.blended.push_back(fast_slow_transform(z.q, z.p));
        run.reference.push_back(fast_slow_transform(ref.q, ref.p));
    };
    record(0.0);
    for (int n = 0; n < setup.steps; ++n) {
        z = blended_step(*system, z, setup.h, schedule.weight(n));
        ref = stormer_verlet_step(*system, ref, setup.h);
        record((n + 1) * setup.h);
    }
    return run;
}

}  // namespace oscda
