#pragma once

#include <pvi/sid.hpp>
#include <pvi/targets.hpp>

namespace pvi {

enum class ThetaRegularizer { None, Tikhonov };

struct EstimatorConfig {
  Eigen::Index n_mc = 100;  // noise draws per particle (L)
  double gamma = 0.0;
  bool crn = true;  // one eps batch shared across particles; false = fresh per particle

  void validate() const {
    if (n_mc < 1) throw std::invalid_argument("EstimatorConfig: n_mc must be >= 1");
    if (gamma < 0.0) throw std::invalid_argument("EstimatorConfig: gamma must be >= 0");
  }
};

namespace detail {

// One pathwise pass: push every particle through the sampling map against L
// noise draws, evaluate the score difference (with optional gamma blunting
// and correction) at the pushed points, and fold the cotangents into the
// accumulators every kernel VJP needs.
inline CotangentAccum score_difference_pass(const SidModel& sid, const TargetModel& target,
                                            const EstimatorConfig& cfg, Rng& rng) {
  cfg.validate();
  if (sid.spec.d_x != target.d_x())
    throw std::invalid_argument("estimator: kernel d_x " + std::to_string(sid.spec.d_x) +
                                " does not match target dimension " +
                                std::to_string(target.d_x()));
  const Eigen::Index n_mc = cfg.n_mc, n_part = sid.n_particles(), d_x = sid.spec.d_x;
  const Eigen::Index n = n_mc * n_part;

  // Noise draws: one L x d_x batch shared by all particles (CRN) or an
  // independent batch per particle laid out as row (l, m) = l * M + m.
  Matrix eps_shared, eps_rows;
  if (cfg.crn) {
    eps_shared = rng.normal_matrix(n_mc, d_x);
  } else {
    eps_rows.resize(n, d_x);
    for (Eigen::Index m = 0; m < n_part; ++m) {
      Rng sub = rng.fork(m);
      const Matrix per = sub.normal_matrix(n_mc, d_x);
      for (Eigen::Index l = 0; l < n_mc; ++l) eps_rows.row(l * n_part + m) = per.row(l);
    }
  }
  auto eps_at = [&](Eigen::Index l, Eigen::Index m) -> Vector {
    return cfg.crn ? Vector(eps_shared.row(l).transpose())
                   : Vector(eps_rows.row(l * n_part + m).transpose());
  };

  // Pushed points X, row (l, m) = phi(Z_m, eps_{l[,m]}).
  Matrix x(n, d_x);
  const KernelCloudCache& kc = sid.cache;
  Matrix fullcov_push;  // (A eps_l)^T rows, shared across particles
  if (cfg.crn && sid.spec.kind == KernelKind::LSkipFullCov)
    fullcov_push = eps_shared * kc.scale;
  for (Eigen::Index l = 0; l < n_mc; ++l) {
    auto block = x.middleRows(l * n_part, n_part);
    if (cfg.crn) {
      switch (sid.spec.kind) {
        case KernelKind::LSkipHetero:
          block = kc.means +
                  (kc.sigmas.array().rowwise() * eps_shared.row(l).array()).matrix();
          break;
        case KernelKind::LSkipFullCov:
          block = kc.means.rowwise() + fullcov_push.row(l);
          break;
        default:
          block = kc.means.rowwise() + kc.sigma * eps_shared.row(l);
          break;
      }
    } else {
      for (Eigen::Index m = 0; m < n_part; ++m)
        block.row(m) =
            kernel_sample_from_cache(sid.spec, kc, m, eps_at(l, m)).transpose();
    }
  }

  auto report_bad = [&](const Matrix& mat, const char* what) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      if (!mat.row(r).allFinite())
        throw std::runtime_error(std::string("estimator: non-finite ") + what +
                                 " at mc sample l=" + std::to_string(r / n_part) +
                                 ", particle m=" + std::to_string(r % n_part));
  };
  if (!x.allFinite()) report_bad(x, "pushed sample");

  // Cotangent d = blunted variational score - target score (+ correction).
  SidEval ev = sid_eval(sid, x);
  Matrix grad_p;
  target.eval_batch(x, nullptr, &grad_p);
  Matrix d;
  if (cfg.gamma > 0.0) {
    const Vector f = sid_gamma_factor(ev, cfg.gamma);
    d = (ev.score.array().colwise() * f.array()).matrix() - grad_p +
        sid_gamma_correction(ev, cfg.gamma);
  } else {
    d = ev.score - grad_p;
  }
  if (!d.allFinite()) report_bad(d, "cotangent");

  CotangentAccum acc = CotangentAccum::zero(sid.spec, n_part);
  for (Eigen::Index l = 0; l < n_mc; ++l) {
    if (cfg.crn) {
      acc.add(sid.spec, d.middleRows(l * n_part, n_part), eps_shared.row(l).transpose());
    } else {
      acc.add_rowwise(sid.spec, d.middleRows(l * n_part, n_part),
                      eps_rows.middleRows(l * n_part, n_part));
    }
  }
  return acc;
}

}  // namespace detail

// Pathwise estimate of the theta-gradient of the (regularized) free energy:
// (1 / (L M)) sum_{l,m} dphi/dtheta^T d_{l,m} plus the regularizer gradient.
inline Vector estimate_grad_theta(const SidModel& sid, const TargetModel& target,
                                  const EstimatorConfig& cfg, double lambda_theta,
                                  ThetaRegularizer reg, Rng& rng) {
  const CotangentAccum acc = detail::score_difference_pass(sid, target, cfg, rng);
  Vector g = kernel_vjp_theta(sid.spec, sid.params, sid.cache, acc) /
             static_cast<double>(cfg.n_mc * sid.n_particles());
  if (reg == ThetaRegularizer::Tikhonov && lambda_theta != 0.0) g += lambda_theta * sid.params;
  require_finite(g, "estimate_grad_theta");
  return g;
}

// Wasserstein drift rows: b_m = -(1/L) sum_l dphi/dz^T d_{l,m} + lambda_r *
// grad log p0(Z_m) for the centred Gaussian p0 with diagonal covariance.
inline Matrix estimate_drift(const SidModel& sid, const TargetModel& target,
                             const EstimatorConfig& cfg, double lambda_r,
                             const Vector& p0_cov_diag, Rng& rng) {
  if (p0_cov_diag.size() != sid.spec.d_z)
    throw std::invalid_argument("estimate_drift: p0 covariance diagonal has length " +
                                std::to_string(p0_cov_diag.size()) + ", expected d_z");
  if (p0_cov_diag.minCoeff() <= 0.0)
    throw std::invalid_argument("estimate_drift: p0 covariance must be positive");
  const CotangentAccum acc = detail::score_difference_pass(sid, target, cfg, rng);
  Matrix drift =
      -kernel_vjp_z(sid.spec, sid.params, sid.cache, acc) / static_cast<double>(cfg.n_mc);
  if (lambda_r != 0.0)
    drift -= lambda_r *
             (sid.cloud().array().rowwise() / p0_cov_diag.transpose().array()).matrix();
  require_finite(drift, "estimate_drift");
  return drift;
}

// Monte Carlo free energy E_q[log(q + gamma) - log p-tilde], reported without
// the mixing-measure regularizer; useful only as a descent diagnostic since
// the target is unnormalized.
inline double estimate_free_energy(const SidModel& sid, const TargetModel& target,
                                   Eigen::Index n, double gamma, Rng& rng) {
  if (n < 1) throw std::invalid_argument("estimate_free_energy: n must be >= 1");
  if (gamma < 0.0) throw std::invalid_argument("estimate_free_energy: gamma must be >= 0");
  const Matrix x = sid_sample(sid, rng, n);
  const SidEval ev = sid_eval(sid, x);
  Vector log_p;
  target.eval_batch(x, &log_p, nullptr);
  double acc = 0.0;
  const double log_gamma = gamma > 0.0 ? std::log(gamma) : 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lq = gamma > 0.0 ? logaddexp(ev.log_q[i], log_gamma) : ev.log_q[i];
    acc += lq - log_p[i];
  }
  const double fe = acc / static_cast<double>(n);
  if (!std::isfinite(fe)) throw std::runtime_error("estimate_free_energy: non-finite estimate");
  return fe;
}

}  // namespace pvi
