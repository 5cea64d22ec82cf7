#pragma once

#include "oscda/types.hpp"

#include <vector>

namespace oscda {

/// M ensemble members stored as columns of a 2N x M matrix, each column the
/// flattened state (q, p).
class Ensemble {
public:
    Ensemble() = default;
    explicit Ensemble(Eigen::MatrixXd members);

    static Ensemble from_states(const std::vector<StateVector>& states);

    Eigen::Index size() const { return members_.cols(); }
    Eigen::Index state_dim() const { return members_.rows(); }
    Eigen::Index dof() const { return members_.rows() / 2; }

    const Eigen::MatrixXd& matrix() const { return members_; }
    Eigen::MatrixXd& matrix() { return members_; }

    StateVector member(Eigen::Index i) const;
    void set_member(Eigen::Index i, const StateVector& z);
    std::vector<StateVector> states() const;

    Eigen::VectorXd mean() const;
    /// Columns z_i - mean.
    Eigen::MatrixXd anomalies() const;
    /// A A^T / (M - 1).
    Eigen::MatrixXd covariance() const;

    auto positions() const { return members_.topRows(dof()); }
    auto positions() { return members_.topRows(dof()); }
    auto momenta() const { return members_.bottomRows(dof()); }
    auto momenta() { return members_.bottomRows(dof()); }

private:
    Eigen::MatrixXd members_;
};

/// Linear observations y = H z + noise, noise ~ N(0, rho I), every dt_obs.
struct ObservationModel {
    Eigen::MatrixXd H;
    double rho = 1.0;
    double dt_obs = 1.0;

    Eigen::Index obs_dim() const { return H.rows(); }
    Eigen::MatrixXd R() const;

    static ObservationModel positions(Eigen::Index n_dof, double rho, double dt_obs);
    static ObservationModel momenta(Eigen::Index n_dof, double rho, double dt_obs);
};

struct GaussianEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Exact Kalman analysis; used as the reference the ensemble analyses must reproduce.
GaussianEstimate kalman_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                               const ObservationModel& obs, const Eigen::VectorXd& y);

/// Symmetric inverse square root via eigendecomposition, eigenvalues floored at `floor`.
Eigen::MatrixXd symmetric_inverse_sqrt(const Eigen::MatrixXd& S, double floor = 1e-12);

/// Deterministic ensemble transform square-root filter.
///
/// With anomalies A and S = I + (HA)^T R^{-1} HA / (M - 1), the analysis is
/// z_j^a = sum_i z_i d_ij, d_ij = w_i - 1/M + t_ij, T = S^{-1/2} and
/// w = 1/M - S^{-1} (HA)^T R^{-1} (H zbar - y) / (M - 1). The analysis mean
/// and covariance coincide with kalman_update applied to the ensemble moments.
Ensemble esrf_analysis(const Ensemble& ens, const ObservationModel& obs, const Eigen::VectorXd& y);

/// Stochastic EnKF with perturbed observations and the empirical gain.
Ensemble enkf_perturbed_analysis(const Ensemble& ens, const ObservationModel& obs,
                                 const Eigen::VectorXd& y, RandomStream& rng);

/// z_i <- zbar + factor (z_i - zbar)
Ensemble inflate(const Ensemble& ens, double factor);

}  // namespace oscda
