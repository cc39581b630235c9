#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Counter-free seed mixer; also used to derive independent sub-streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG with keyed sub-streams. All sampling goes through this
// class so that a run is reproducible from a single seed regardless of how
// work is ordered internally.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  // Child stream indexed by one or more keys. Streams derived with distinct
  // key tuples are statistically independent of the parent and each other.
  template <typename... Keys>
  Rng fork(Keys... keys) const {
    std::uint64_t h = state_;
    ((h = splitmix64(h ^ (0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(keys)))), ...);
    return Rng(h, 0);
  }

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Always finite: u1 is kept away from 0.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector out(n);
    fill_normal(out.data(), static_cast<std::size_t>(n));
    return out;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix out(rows, cols);
    fill_normal(out.data(), static_cast<std::size_t>(rows * cols));
    return out;
  }

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<Eigen::Index> permutation(Eigen::Index n) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(uniform_int(static_cast<std::uint64_t>(i) + 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
  }

 private:
  Rng(std::uint64_t raw_state, int) : state_(raw_state) {}

  void fill_normal(double* p, std::size_t n) {
    std::size_t i = 0;
    for (; i + 1 < n; i += 2) {
      const double u1 = 1.0 - uniform();
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 6.283185307179586477 * u2;
      p[i] = r * std::cos(a);
      p[i + 1] = r * std::sin(a);
    }
    if (i < n) p[i] = normal();
  }

  std::uint64_t state_;
};

inline double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Stable log(sum(exp(v))). Shift-invariant; never overflows for finite input.
inline double logsumexp(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("logsumexp: empty input");
  const double m = v.maxCoeff();
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct SymEig {
  Matrix u;       // orthonormal eigenvectors, columns
  Vector lambda;  // ascending eigenvalues
};

inline SymEig sym_eig(const Matrix& s, const char* who) {
  if (s.rows() != s.cols())
    throw std::invalid_argument(std::string(who) + ": matrix must be square, got " +
                                std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument(std::string(who) + ": matrix is not symmetric within 1e-10");
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw std::runtime_error(std::string(who) + ": eigendecomposition failed");
  return {es.eigenvectors(), es.eigenvalues()};
}

// exp(S) for symmetric S via eigendecomposition. Result is symmetric
// positive definite whenever S is symmetric.
inline Matrix sym_matrix_exp(const Matrix& s) {
  const SymEig e = sym_eig(s, "sym_matrix_exp");
  return e.u * e.lambda.array().exp().matrix().asDiagonal() * e.u.transpose();
}

// Adjoint of the Frechet derivative of exp at symmetric S (eigendecomposition
// supplied): maps a cotangent C to the gradient w.r.t. S. Uses the divided
// difference (e^a - e^b)/(a - b) in the eigenbasis, with the confluent limit
// e^a when eigenvalues coincide.
inline Matrix sym_exp_frechet_adjoint(const SymEig& e, const Matrix& c) {
  const Eigen::Index d = e.lambda.size();
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = e.lambda[i], b = e.lambda[j];
      if (std::abs(a - b) < 1e-12 * (1.0 + std::abs(a) + std::abs(b))) {
        const double m = 0.5 * (a + b);
        g(i, j) = std::exp(m);
      } else {
        g(i, j) = (std::exp(a) - std::exp(b)) / (a - b);
      }
    }
  }
  const Matrix p = e.u.transpose() * c * e.u;
  return e.u * p.cwiseProduct(g) * e.u.transpose();
}

// Lower-triangular Cholesky factor of an SPD matrix. Hand-rolled so the
// error can name the first non-positive pivot.
inline Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("cholesky: matrix must be square");
  const Eigen::Index d = a.rows();
  Matrix l = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double pivot = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0))
      throw std::runtime_error("cholesky: non-positive pivot at index " + std::to_string(j) +
                               " (value " + std::to_string(pivot) + ")");
    l(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

inline void require_finite(const Matrix& m, const char* what) {
  if (m.allFinite()) return;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw std::runtime_error(std::string(what) + ": non-finite value at (" +
                                 std::to_string(i) + ", " + std::to_string(j) + ")");
}

inline void require_finite(const Vector& v, const char* what) {
  if (v.allFinite()) return;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw std::runtime_error(std::string(what) + ": non-finite value at index " +
                               std::to_string(i));
}

}  // namespace pvi
