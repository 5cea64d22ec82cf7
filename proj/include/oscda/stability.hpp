#pragma once

#include "oscda/models.hpp"

#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oscda {

/// Spectral summary of a one-step linear map.
struct LinearFlowReport {
    Eigen::MatrixXd matrix;
    Eigen::VectorXcd eigenvalues;  // sorted by decreasing modulus
    double spectral_radius = 0.0;
    double determinant = 0.0;
    double trace = 0.0;
    /// trace^2 - 4 det, only for 2 x 2 maps.
    std::optional<double> discriminant;
};

LinearFlowReport eigen_report(const Eigen::MatrixXd& matrix);

/// Column-probes the blended one-step map of `system`: column j is
/// blended_step applied to the j-th unit state. Exact for linear systems.
Eigen::MatrixXd extract_flow_matrix(const StiffSystem& system, double h, double alpha);

/// Blended map of H = K q^2 / 2 + p^2 / 2 with the slow branch projecting onto q = 0.
Eigen::MatrixXd harmonic_flow_matrix(double K, double h, double alpha);

/// Closed form of the harmonic blended map,
///   [[1 - a K h^2 / 2, (1 + a) h / 2 + s a K h^3 / 4], [-a K h, a - a K h^2 / 2]]
/// with s = cubic_sign. The consistent map has s = -1.
Eigen::Matrix2d closed_form_harmonic_flow_matrix(double K, double h, double alpha,
                                                 double cubic_sign = -1.0);

/// d = K^2 h^4 a^2 - 2 K h^2 a^2 - 2 K h^2 a + a^2 - 2 a + 1
double harmonic_discriminant(double kh2, double alpha);

/// (1 + a) / 2 - K h^2 a / 2 +- sqrt(d) / 2
std::pair<std::complex<double>, std::complex<double>> harmonic_eigenvalues(double kh2,
                                                                           double alpha);

/// Roots in alpha of the discriminant, (Kh^2 + 1 +- 2 sqrt(Kh^2)) / (Kh^2 - 1)^2,
/// both equal to 1/4 at Kh^2 = 1. Returned as (minus, plus).
std::pair<double, double> alpha_pm(double K, double h);
std::pair<double, double> alpha_pm_kh2(double kh2);

/// Blended map of the coupled oscillator
///   H = |p|^2 / 2 + K (q1 - q2)^2 / 2 + q2^2 / 2
/// in the coordinates (q1, q2, p1, p2).
Eigen::MatrixXd coupled_flow_matrix(double K, double h, double alpha);

/// Expanded symbolic form of the coupled map, compared entry by entry
/// against the extracted matrix.
Eigen::Matrix4d closed_form_coupled_flow_matrix(double K, double h, double alpha);

struct MatrixComparison {
    Eigen::MatrixXd deviation;  // reference - extracted
    double max_abs_deviation = 0.0;
    std::vector<std::pair<int, int>> mismatched;  // entries above the tolerance
};

MatrixComparison compare_matrices(const Eigen::MatrixXd& extracted,
                                  const Eigen::MatrixXd& reference, double tol = 1e-10);

/// Fast and slow coordinates of the coupled oscillator.
struct FastSlowState {
    double x = 0.0;
    double y = 0.0;
    double p_x = 0.0;
    double p_y = 0.0;
};

/// x = (q1 - q2) / 2, y = (q1 + q2) / 2, p_x = p1 - p2, p_y = p1 + p2.
FastSlowState fast_slow_transform(const Eigen::Vector2d& q, const Eigen::Vector2d& p);
std::pair<Eigen::Vector2d, Eigen::Vector2d> inverse_fast_slow_transform(const FastSlowState& s);

/// One row of a harmonic (Kh^2, alpha) scan.
struct HarmonicScanRow {
    double kh2 = 0.0;
    double alpha = 0.0;
    double abs_lambda1 = 0.0;
    double abs_lambda2 = 0.0;
    double discriminant = 0.0;
    std::string regime;  // "spiral" for d < 0, "node" otherwise
    double alpha_minus = 0.0;
    double alpha_plus = 0.0;
};

/// Scans extracted harmonic maps at h = 1 with K = Kh^2.
std::vector<HarmonicScanRow> scan_harmonic(const std::vector<double>& kh2_values,
                                           const std::vector<double>& alphas);

struct CoupledScanRow {
    double alpha = 0.0;
    std::vector<double> abs_lambda;  // four moduli, decreasing
};

std::vector<CoupledScanRow> scan_coupled(double K, double h, const std::vector<double>& alphas);

/// Free run of the coupled oscillator with a linear blending ramp against a
/// balanced Verlet reference, both reported in fast/slow coordinates.
struct CoupledBlendingSetup {
    double K = 100.0;
    double h = 2.5e-2;
    int window = 40;
    int steps = 400;
    double x0 = 0.1;
    double y0 = 1.0;
};

struct CoupledBlendingRun {
    std::vector<double> time;
    std::vector<FastSlowState> blended;
    std::vector<FastSlowState> reference;
};

CoupledBlendingRun coupled_blending_run(const CoupledBlendingSetup& setup);

}  // namespace oscda
