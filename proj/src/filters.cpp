#include "oscda/filters.hpp"

#include <cmath>

namespace oscda {

namespace {

void check_analysis_inputs(const Ensemble& ens, const ObservationModel& obs,
                           const Eigen::VectorXd& y) {
    if (ens.size() < 2) throw Error("ensemble analysis needs at least two members");
    if (obs.H.cols() != ens.state_dim())
        throw DimensionError("observation operator does not match the state dimension");
    if (y.size() != obs.obs_dim()) throw DimensionError("observation vector has wrong length");
    if (!(obs.rho > 0.0)) throw Error("observation error variance must be positive");
}

}  // namespace

Ensemble::Ensemble(Eigen::MatrixXd members) : members_(std::move(members)) {
    if (members_.rows() == 0 || members_.rows() % 2 != 0)
        throw DimensionError("Ensemble: state dimension must be even and non-zero");
}

Ensemble Ensemble::from_states(const std::vector<StateVector>& states) {
    if (states.empty()) throw DimensionError("Ensemble: no members");
    const Eigen::Index n = states.front().dof();
    Eigen::MatrixXd m(2 * n, static_cast<Eigen::Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].dof() != n) throw DimensionError("Ensemble: members differ in dimension");
        m.col(static_cast<Eigen::Index>(i)) = states[i].flatten();
    }
    return Ensemble(std::move(m));
}

StateVector Ensemble::member(Eigen::Index i) const {
    return StateVector::unflatten(members_.col(i));
}

void Ensemble::set_member(Eigen::Index i, const StateVector& z) {
    if (2 * z.dof() != state_dim()) throw DimensionError("Ensemble: member dimension mismatch");
    members_.col(i).head(dof()) = z.q;
    members_.col(i).tail(dof()) = z.p;
}

std::vector<StateVector> Ensemble::states() const {
    std::vector<StateVector> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (Eigen::Index i = 0; i < size(); ++i) out.push_back(member(i));
    return out;
}

Eigen::VectorXd Ensemble::mean() const { return members_.rowwise().mean(); }

Eigen::MatrixXd Ensemble::anomalies() const { return members_.colwise() - mean(); }

Eigen::MatrixXd Ensemble::covariance() const {
    const Eigen::MatrixXd A = anomalies();
    return A * A.transpose() / static_cast<double>(size() - 1);
}

Eigen::MatrixXd ObservationModel::R() const {
    return rho * Eigen::MatrixXd::Identity(obs_dim(), obs_dim());
}

ObservationModel ObservationModel::positions(Eigen::Index n_dof, double rho, double dt_obs) {
    ObservationModel obs;
    obs.H = Eigen::MatrixXd::Zero(n_dof, 2 * n_dof);
    obs.H.leftCols(n_dof).setIdentity();
    obs.rho = rho;
    obs.dt_obs = dt_obs;
    return obs;
}

ObservationModel ObservationModel::momenta(Eigen::Index n_dof, double rho, double dt_obs) {
    ObservationModel obs;
    obs.H = Eigen::MatrixXd::Zero(n_dof, 2 * n_dof);
    obs.H.rightCols(n_dof).setIdentity();
    obs.rho = rho;
    obs.dt_obs = dt_obs;
    return obs;
}

GaussianEstimate kalman_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                               const ObservationModel& obs, const Eigen::VectorXd& y) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size() || obs.H.cols() != mean.size())
        throw DimensionError("kalman_update: inconsistent dimensions");
    if (y.size() != obs.obs_dim()) throw DimensionError("kalman_update: bad observation length");
    const Eigen::MatrixXd PHt = cov * obs.H.transpose();
    const Eigen::MatrixXd innovation_cov = obs.H * PHt + obs.R();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(innovation_cov);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-15)
        throw Error("kalman_update: singular innovation covariance");
    // K = P H^T (H P H^T + R)^{-1}
    const Eigen::MatrixXd gain = ldlt.solve(PHt.transpose()).transpose();
    GaussianEstimate post;
    post.mean = mean - gain * (obs.H * mean - y);
    post.cov = cov - gain * obs.H * cov;
    post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
    return post;
}

Eigen::MatrixXd symmetric_inverse_sqrt(const Eigen::MatrixXd& S, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    if (eig.info() != Eigen::Success) throw Error("symmetric_inverse_sqrt: eigensolver failed");
    const Eigen::VectorXd inv_sqrt =
        eig.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
    return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
}

Ensemble esrf_analysis(const Ensemble& ens, const ObservationModel& obs, const Eigen::VectorXd& y) {
    check_analysis_inputs(ens, obs, y);
    const Eigen::Index M = ens.size();
    const double m1 = static_cast<double>(M - 1);

    const Eigen::VectorXd zbar = ens.mean();
    const Eigen::MatrixXd A = ens.matrix().colwise() - zbar;
    const Eigen::MatrixXd HA = obs.H * A;
    const Eigen::VectorXd innovation = obs.H * zbar - y;

    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(M, M) + HA.transpose() * HA / (obs.rho * m1);
    S = 0.5 * (S + S.transpose()).eval();
    const Eigen::MatrixXd T = symmetric_inverse_sqrt(S);
    // S^{-1} = T^2 up to the eigenvalue floor; S >= I so the floor is inactive.
    const Eigen::VectorXd shift = -(T * T) * (HA.transpose() * innovation) / (obs.rho * m1);

    // z_j^a = zbar + A (w - 1/M) + A t_j
    Eigen::MatrixXd out = A * T;
    out.colwise() += zbar + A * shift;
    return Ensemble(std::move(out));
}

Ensemble enkf_perturbed_analysis(const Ensemble& ens, const ObservationModel& obs,
                                 const Eigen::VectorXd& y, RandomStream& rng) {
    check_analysis_inputs(ens, obs, y);
    const Eigen::MatrixXd P = ens.covariance();
    const Eigen::MatrixXd PHt = P * obs.H.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(obs.H * PHt + obs.R());
    if (ldlt.info() != Eigen::Success) throw Error("enkf: singular innovation covariance");
    const Eigen::MatrixXd gain = ldlt.solve(PHt.transpose()).transpose();

    const double sd = std::sqrt(obs.rho);
    Eigen::MatrixXd out = ens.matrix();
    Eigen::VectorXd xi(obs.obs_dim());
    for (Eigen::Index i = 0; i < ens.size(); ++i) {
        rng.fill_gaussian(xi);
        out.col(i) -= gain * (obs.H * ens.matrix().col(i) + sd * xi - y);
    }
    return Ensemble(std::move(out));
}

Ensemble inflate(const Ensemble& ens, double factor) {
    if (factor == 1.0) return ens;
    const Eigen::VectorXd zbar = ens.mean();
    Eigen::MatrixXd out = (ens.matrix().colwise() - zbar) * factor;
    out.colwise() += zbar;
    return Ensemble(std::move(out));
}

}  // namespace oscda
