#pragma once

#include <pvi/kernels.hpp>

namespace pvi {

// Mixture over a particle cloud: q(x) = (1/M) sum_m k_theta(x | z_m).
// The cloud plays the role of the mixing measure; all densities and scores
// are computed against the cached per-particle conditionals.
struct SidModel {
  KernelSpec spec;
  Vector params;
  KernelCloudCache cache;

  Eigen::Index n_particles() const { return cache.cloud.rows(); }
  const Matrix& cloud() const { return cache.cloud; }
};

inline SidModel make_sid(const KernelSpec& spec, const Vector& params, const Matrix& cloud) {
  if (cloud.rows() == 0) throw std::invalid_argument("make_sid: empty particle cloud");
  return {spec, params, kernel_build_cache(spec, params, cloud)};
}

struct SidEval {
  Vector log_q;  // per row of x
  Matrix score;  // d/dx log q, one row per x
};

// Shared batched evaluation of the mixture log-density and score.
inline SidEval sid_eval(const SidModel& model, const Matrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = model.n_particles();
  Matrix logits = kernel_log_density_batch(model.spec, model.cache, x);
  SidEval ev;
  ev.log_q.resize(n);
  const Vector row_max = logits.rowwise().maxCoeff();
  Matrix w = (logits.colwise() - row_max).array().exp();
  const Vector row_sum = w.rowwise().sum();
  ev.log_q = row_max.array() + row_sum.array().log() - std::log(static_cast<double>(m));
  w.array().colwise() /= row_sum.array();  // responsibilities, rows sum to 1

  switch (model.spec.kind) {
    case KernelKind::LSkipHetero: {
      const Matrix a = model.cache.sigmas.array().square().inverse();
      ev.score = w * model.cache.means.cwiseProduct(a) - x.cwiseProduct(w * a);
      break;
    }
    case KernelKind::LSkipFullCov: {
      ev.score = (w * model.cache.means - x) * model.cache.sigma_inv;
      break;
    }
    default: {
      const double inv_s2 = 1.0 / (model.cache.sigma * model.cache.sigma);
      ev.score = inv_s2 * (w * model.cache.means - x);
      break;
    }
  }
  return ev;
}

inline double sid_log_density(const SidModel& model, const Vector& x) {
  return sid_eval(model, x.transpose()).log_q[0];
}

inline Vector sid_score(const SidModel& model, const Vector& x) {
  return sid_eval(model, x.transpose()).score.row(0).transpose();
}

// Blunted score d/dx log(q + gamma) = score * q / (q + gamma). The factor is
// computed in log space so it is exact for tiny densities.
inline Vector sid_gamma_factor(const SidEval& ev, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
  if (gamma == 0.0) return Vector::Ones(ev.log_q.size());
  const double log_gamma = std::log(gamma);
  Vector f(ev.log_q.size());
  for (Eigen::Index i = 0; i < f.size(); ++i)
    f[i] = std::exp(ev.log_q[i] - logaddexp(ev.log_q[i], log_gamma));
  return f;
}

inline Matrix sid_score_gamma_batch(const SidModel& model, const Matrix& x, double gamma) {
  SidEval ev = sid_eval(model, x);
  const Vector f = sid_gamma_factor(ev, gamma);
  return ev.score.array().colwise() * f.array();
}

inline Vector sid_score_gamma(const SidModel& model, const Vector& x, double gamma) {
  return sid_score_gamma_batch(model, x.transpose(), gamma).row(0).transpose();
}

// Correction term gamma * dq/dx / (q + gamma)^2, the gradient of
// -gamma / (q + gamma). Vanishes as gamma -> 0 and is bounded by |dq/dx| / gamma.
inline Matrix sid_gamma_correction(const SidEval& ev, double gamma) {
  if (gamma <= 0.0) return Matrix::Zero(ev.score.rows(), ev.score.cols());
  const double log_gamma = std::log(gamma);
  Vector f(ev.log_q.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double lse = logaddexp(ev.log_q[i], log_gamma);
    f[i] = std::exp(log_gamma + ev.log_q[i] - 2.0 * lse);
  }
  return ev.score.array().colwise() * f.array();
}

// Draw n points: uniform particle index, then the kernel's sampling map.
inline Matrix sid_sample(const SidModel& model, Rng& rng, Eigen::Index n) {
  Matrix out(n, model.spec.d_x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto m = static_cast<Eigen::Index>(
        rng.uniform_int(static_cast<std::uint64_t>(model.n_particles())));
    out.row(i) =
        kernel_sample_from_cache(model.spec, model.cache, m, rng.normal_vector(model.spec.d_x))
            .transpose();
  }
  return out;
}

}  // namespace pvi
