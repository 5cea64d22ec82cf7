#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace oscda {

// Model-side linear algebra uses bounded dynamic sizes so that the inner
// time-stepping loops never touch the heap.
inline constexpr int kMaxDof = 8;
inline constexpr int kMaxConstraints = 4;

using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDof, 1>;
using ConstraintVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxConstraints, 1>;
using Jacobian = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxConstraints, kMaxDof>;
using ConstraintMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxConstraints, kMaxConstraints>;
using DofMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDof, kMaxDof>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Evaluation at a point where the model is undefined or a constraint
/// Jacobian loses rank.
class SingularConfiguration : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, int iterations, double residual)
        : Error(what), iterations_(iterations), residual_(residual) {}

    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Phase-space point z = (q, p) with unit mass matrix.
struct StateVector {
    Vector q;
    Vector p;

    StateVector() = default;
    StateVector(Vector q_in, Vector p_in) : q(std::move(q_in)), p(std::move(p_in)) {
        if (q.size() != p.size() || q.size() < 1)
            throw DimensionError("StateVector: q and p must have equal non-zero length");
    }

    Eigen::Index dof() const { return q.size(); }

    bool finite() const { return q.allFinite() && p.allFinite(); }

    Eigen::VectorXd flatten() const {
        Eigen::VectorXd z(2 * q.size());
        z << q, p;
        return z;
    }

    static StateVector unflatten(const Eigen::Ref<const Eigen::VectorXd>& z) {
        if (z.size() % 2 != 0 || z.size() == 0 || z.size() > 2 * kMaxDof)
            throw DimensionError("StateVector::unflatten: bad length");
        const Eigen::Index n = z.size() / 2;
        return StateVector(z.head(n), z.tail(n));
    }
};

inline StateVector operator+(const StateVector& a, const StateVector& b) {
    return StateVector(a.q + b.q, a.p + b.p);
}

inline StateVector operator*(double s, const StateVector& a) { return StateVector(s * a.q, s * a.p); }

/// A reproducible Gaussian stream. Every stochastic consumer (a single
/// ensemble member, the truth run, the observation generator) owns one.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    RandomStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0,
                 std::uint64_t sub = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32), static_cast<std::uint32_t>(sub)};
        engine_.seed(seq);
    }

    double gaussian() { return normal_(engine_); }

    template <class Derived>
    void fill_gaussian(Eigen::MatrixBase<Derived>& out) {
        for (Eigen::Index i = 0; i < out.size(); ++i) out.derived().coeffRef(i) = normal_(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace oscda
