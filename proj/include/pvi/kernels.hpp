#pragma once

#include <pvi/mlp.hpp>

namespace pvi {

// Conditional families k_theta(x | z). All are Gaussians whose mean (and
// possibly scale) comes from a network applied to z, sampled by the
// reparameterized map phi(z, eps) = mean(z) + scale(z) * eps.
enum class KernelKind { Constant, Push, Skip, LSkip, LSkipHetero, LSkipFullCov };

inline const char* kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::Constant: return "constant";
    case KernelKind::Push: return "push";
    case KernelKind::Skip: return "skip";
    case KernelKind::LSkip: return "lskip";
    case KernelKind::LSkipHetero: return "lskip_hetero";
    case KernelKind::LSkipFullCov: return "lskip_fullcov";
  }
  return "?";
}

struct KernelSpec {
  KernelKind kind = KernelKind::Skip;
  Eigen::Index d_z = 0, d_x = 0;
  double constant_c = 1.0;  // Constant kernel covariance c * I
  MlpSpec mlp;              // unused for Constant

  bool has_mlp() const { return kind != KernelKind::Constant; }
  bool has_w() const {
    return kind == KernelKind::LSkip || kind == KernelKind::LSkipHetero ||
           kind == KernelKind::LSkipFullCov;
  }
  bool has_log_sigma() const {
    return kind == KernelKind::Push || kind == KernelKind::Skip || kind == KernelKind::LSkip;
  }

  void validate() const {
    if (d_z <= 0 || d_x <= 0)
      throw std::invalid_argument("KernelSpec: dimensions must be positive");
    if (kind == KernelKind::Constant || kind == KernelKind::Skip) {
      if (d_z != d_x)
        throw std::invalid_argument(std::string("KernelSpec: ") + kernel_kind_name(kind) +
                                    " kernel requires d_z == d_x");
    }
    if (kind == KernelKind::Constant) {
      if (!(constant_c > 0.0))
        throw std::invalid_argument("KernelSpec: constant kernel needs c > 0");
      return;
    }
    mlp.validate();
    if (mlp.d_in() != d_z)
      throw std::invalid_argument("KernelSpec: network input size must equal d_z");
    const Eigen::Index want_out = kind == KernelKind::LSkipHetero ? 2 * d_x : d_x;
    if (mlp.d_out() != want_out)
      throw std::invalid_argument("KernelSpec: network output size must be " +
                                  std::to_string(want_out) + ", got " +
                                  std::to_string(mlp.d_out()));
    if (mlp.out_transform != OutputTransform::Identity)
      throw std::invalid_argument(
          "KernelSpec: kernel networks use the identity output transform; the "
          "heteroscedastic scale applies softplus internally");
  }

  // Flat layout: [W row-major] [mlp params] [log-sigma | M row-major].
  Eigen::Index w_offset() const { return 0; }
  Eigen::Index w_count() const { return has_w() ? d_x * d_z : 0; }
  Eigen::Index mlp_offset() const { return w_count(); }
  Eigen::Index mlp_count() const { return has_mlp() ? mlp.param_count() : 0; }
  Eigen::Index tail_offset() const { return mlp_offset() + mlp_count(); }
  Eigen::Index tail_count() const {
    if (has_log_sigma()) return 1;
    if (kind == KernelKind::LSkipFullCov) return d_x * d_x;
    return 0;
  }
  Eigen::Index param_count() const { return tail_offset() + tail_count(); }
};

inline KernelSpec make_constant_kernel(Eigen::Index d, double c) {
  KernelSpec s;
  s.kind = KernelKind::Constant;
  s.d_z = s.d_x = d;
  s.constant_c = c;
  s.validate();
  return s;
}

inline KernelSpec make_kernel(KernelKind kind, Eigen::Index d_z, Eigen::Index d_x,
                              Eigen::Index d_hidden) {
  KernelSpec s;
  s.kind = kind;
  s.d_z = d_z;
  s.d_x = d_x;
  if (kind != KernelKind::Constant)
    s.mlp = make_mlp_spec(d_z, d_hidden, kind == KernelKind::LSkipHetero ? 2 * d_x : d_x);
  s.validate();
  return s;
}

// theta_0: network weights from Glorot, W = 0, log-sigma = 0, M = 0 so the
// initial conditional is centred with unit (or configured) scale.
enum class SkipInit { Zero, Identity };

inline Vector kernel_init(const KernelSpec& spec, Rng& rng, SkipInit w_init = SkipInit::Zero) {
  spec.validate();
  Vector params = Vector::Zero(spec.param_count());
  if (spec.has_mlp())
    params.segment(spec.mlp_offset(), spec.mlp_count()) = mlp_init(spec.mlp, rng);
  if (spec.has_w() && w_init == SkipInit::Identity) {
    Eigen::Map<RowMajorMatrix> w(params.data() + spec.w_offset(), spec.d_x, spec.d_z);
    w.setIdentity();
  }
  return params;
}

// Per-cloud cache: conditional means and scales for every particle plus the
// network activations needed by the backward passes.
struct KernelCloudCache {
  Matrix cloud;    // M x d_z
  Matrix means;    // M x d_x
  double sigma = 1.0;   // homoscedastic scale
  Matrix sigmas;        // M x d_x, heteroscedastic only
  Matrix sp_deriv;      // M x d_x, sigmoid of the scale pre-activation
  SymEig t_eig;         // full-covariance only: eigensystem of sym(M)/4 * 2
  Matrix scale;         // A = exp(T)
  Matrix sigma_inv;     // A^-2
  double logdet_sigma = 0.0;
  Vector mlp_params;    // copy of the network segment
  MlpCache mlp_cache;   // batched over particles
};

namespace detail {

inline void check_kernel_params(const KernelSpec& spec, const Vector& params) {
  if (params.size() != spec.param_count())
    throw std::invalid_argument("kernel: parameter vector has length " +
                                std::to_string(params.size()) + ", expected " +
                                std::to_string(spec.param_count()));
}

inline Eigen::Map<const RowMajorMatrix> kernel_w(const KernelSpec& spec, const Vector& params) {
  return {params.data() + spec.w_offset(), spec.d_x, spec.d_z};
}

}  // namespace detail

inline KernelCloudCache kernel_build_cache(const KernelSpec& spec, const Vector& params,
                                           const Matrix& cloud) {
  spec.validate();
  detail::check_kernel_params(spec, params);
  if (cloud.cols() != spec.d_z)
    throw std::invalid_argument("kernel: cloud has " + std::to_string(cloud.cols()) +
                                " columns, expected d_z = " + std::to_string(spec.d_z));
  KernelCloudCache c;
  c.cloud = cloud;
  switch (spec.kind) {
    case KernelKind::Constant:
      c.means = cloud;
      c.sigma = std::sqrt(spec.constant_c);
      return c;
    case KernelKind::Push:
    case KernelKind::Skip: {
      c.mlp_params = params.segment(spec.mlp_offset(), spec.mlp_count());
      c.mlp_cache = mlp_forward_cached(spec.mlp, c.mlp_params, cloud);
      c.means = spec.kind == KernelKind::Skip ? Matrix(cloud + c.mlp_cache.output)
                                              : c.mlp_cache.output;
      c.sigma = std::exp(params[spec.tail_offset()]);
      return c;
    }
    case KernelKind::LSkip: {
      c.mlp_params = params.segment(spec.mlp_offset(), spec.mlp_count());
      c.mlp_cache = mlp_forward_cached(spec.mlp, c.mlp_params, cloud);
      c.means = cloud * detail::kernel_w(spec, params).transpose() + c.mlp_cache.output;
      c.sigma = std::exp(params[spec.tail_offset()]);
      return c;
    }
    case KernelKind::LSkipHetero: {
      c.mlp_params = params.segment(spec.mlp_offset(), spec.mlp_count());
      c.mlp_cache = mlp_forward_cached(spec.mlp, c.mlp_params, cloud);
      const Eigen::Index dx = spec.d_x;
      c.means = cloud * detail::kernel_w(spec, params).transpose() +
                c.mlp_cache.output.leftCols(dx);
      const Matrix raw = c.mlp_cache.output.rightCols(dx);
      c.sigmas = raw.unaryExpr([&](double v) { return softplus(v) + spec.mlp.out_eps; });
      c.sp_deriv = raw.unaryExpr([](double v) { return sigmoid(v); });
      return c;
    }
    case KernelKind::LSkipFullCov: {
      c.mlp_params = params.segment(spec.mlp_offset(), spec.mlp_count());
      c.mlp_cache = mlp_forward_cached(spec.mlp, c.mlp_params, cloud);
      c.means = cloud * detail::kernel_w(spec, params).transpose() + c.mlp_cache.output;
      Eigen::Map<const RowMajorMatrix> m_mat(params.data() + spec.tail_offset(), spec.d_x,
                                             spec.d_x);
      const Matrix t = 0.25 * (m_mat + m_mat.transpose());
      c.t_eig = sym_eig(t, "kernel fullcov scale");
      const Vector el = c.t_eig.lambda.array().exp();
      c.scale = c.t_eig.u * el.asDiagonal() * c.t_eig.u.transpose();
      c.sigma_inv = c.t_eig.u * c.t_eig.lambda.array().exp().square().inverse().matrix().asDiagonal() *
                    c.t_eig.u.transpose();
      c.logdet_sigma = 2.0 * c.t_eig.lambda.sum();
      return c;
    }
  }
  throw std::logic_error("kernel_build_cache: unreachable");
}

// phi(z_m, eps) for each row of eps against particle m of the cache.
inline Vector kernel_sample_from_cache(const KernelSpec& spec, const KernelCloudCache& c,
                                       Eigen::Index m, const Vector& eps) {
  switch (spec.kind) {
    case KernelKind::LSkipHetero:
      return c.means.row(m).transpose().array() + c.sigmas.row(m).transpose().array() * eps.array();
    case KernelKind::LSkipFullCov:
      return c.means.row(m).transpose() + c.scale * eps;
    default:
      return c.means.row(m).transpose() + c.sigma * eps;
  }
}

// Log-densities of every row of x against every particle: result is n x M.
inline Matrix kernel_log_density_batch(const KernelSpec& spec, const KernelCloudCache& c,
                                       const Matrix& x) {
  if (x.cols() != spec.d_x)
    throw std::invalid_argument("kernel_log_density: point dimension mismatch");
  const double log2pi = std::log(2.0 * M_PI);
  const Eigen::Index n = x.rows(), m = c.means.rows(), dx = spec.d_x;
  switch (spec.kind) {
    case KernelKind::LSkipHetero: {
      const Matrix a = c.sigmas.array().square().inverse();           // M x dx
      const Matrix mu_a = c.means.cwiseProduct(a);                    // M x dx
      const Vector row_const = (c.means.cwiseProduct(mu_a)).rowwise().sum() * 0.5 +
                               c.sigmas.array().log().matrix().rowwise().sum() +
                               Vector::Constant(m, 0.5 * dx * log2pi);
      Matrix logits = x * mu_a.transpose() - 0.5 * x.cwiseProduct(x) * a.transpose();
      logits.rowwise() -= row_const.transpose();
      return logits;
    }
    case KernelKind::LSkipFullCov: {
      const Matrix b = x * c.sigma_inv;                               // n x dx
      const Vector xq = 0.5 * b.cwiseProduct(x).rowwise().sum();      // n
      const Matrix bm = c.means * c.sigma_inv;                        // M x dx
      const Vector mq = 0.5 * bm.cwiseProduct(c.means).rowwise().sum();
      Matrix logits = b * c.means.transpose();
      logits.colwise() -= xq;
      logits.rowwise() -= mq.transpose();
      logits.array() -= 0.5 * (dx * log2pi + c.logdet_sigma);
      return logits;
    }
    default: {
      const double inv2s2 = 1.0 / (2.0 * c.sigma * c.sigma);
      const Vector xs = x.rowwise().squaredNorm();
      const Vector ms = c.means.rowwise().squaredNorm();
      Matrix logits = 2.0 * (x * c.means.transpose());
      logits.colwise() -= xs;
      logits.rowwise() -= ms.transpose();
      logits *= inv2s2;
      logits.array() -= 0.5 * dx * log2pi + dx * std::log(c.sigma);
      return logits;
    }
  }
}

// Accumulators produced by an estimator pass. With cotangent d_{l,m} for
// noise draw l against particle m:
//   d_sum(m, :)  = sum_l d_{l,m}
//   eps_dot(m)   = sum_l <eps_l, d_{l,m}>
//   eps_prod(m,:)= sum_l eps_l .* d_{l,m}
//   outer        = sum_l (sum_m d_{l,m}) eps_l^T
// Only the pieces the kernel variant needs have to be filled in.
struct CotangentAccum {
  Matrix d_sum;
  Vector eps_dot;
  Matrix eps_prod;
  Matrix outer;

  static CotangentAccum zero(const KernelSpec& spec, Eigen::Index n_particles) {
    CotangentAccum a;
    a.d_sum = Matrix::Zero(n_particles, spec.d_x);
    if (spec.has_log_sigma()) a.eps_dot = Vector::Zero(n_particles);
    if (spec.kind == KernelKind::LSkipHetero)
      a.eps_prod = Matrix::Zero(n_particles, spec.d_x);
    if (spec.kind == KernelKind::LSkipFullCov) a.outer = Matrix::Zero(spec.d_x, spec.d_x);
    return a;
  }

  // d is n_particles x d_x: the cotangents for one shared noise draw eps.
  void add(const KernelSpec& spec, const Matrix& d, const Vector& eps) {
    d_sum += d;
    if (spec.has_log_sigma()) eps_dot += d * eps;
    if (spec.kind == KernelKind::LSkipHetero)
      eps_prod += (d.array().rowwise() * eps.transpose().array()).matrix();
    if (spec.kind == KernelKind::LSkipFullCov)
      outer += d.colwise().sum().transpose() * eps.transpose();
  }
};

// Gradient of sum_{l,m} <phi(z_m, eps_l), d_{l,m}> with respect to the flat
// kernel parameters.
inline Vector kernel_vjp_theta(const KernelSpec& spec, const Vector& params,
                               const KernelCloudCache& c, const CotangentAccum& acc) {
  detail::check_kernel_params(spec, params);
  Vector grad = Vector::Zero(spec.param_count());
  if (spec.kind == KernelKind::Constant) return grad;

  Matrix mlp_cot;
  if (spec.kind == KernelKind::LSkipHetero) {
    mlp_cot.resize(acc.d_sum.rows(), 2 * spec.d_x);
    mlp_cot.leftCols(spec.d_x) = acc.d_sum;
    mlp_cot.rightCols(spec.d_x) = c.sp_deriv.cwiseProduct(acc.eps_prod);
  } else {
    mlp_cot = acc.d_sum;
  }
  Vector mlp_grad = mlp_vjp_params(spec.mlp, c.mlp_params, c.mlp_cache, mlp_cot);
  grad.segment(spec.mlp_offset(), spec.mlp_count()) = mlp_grad;

  if (spec.has_w()) {
    Eigen::Map<RowMajorMatrix> gw(grad.data() + spec.w_offset(), spec.d_x, spec.d_z);
    gw = acc.d_sum.transpose() * c.cloud;
  }
  if (spec.has_log_sigma()) {
    grad[spec.tail_offset()] = c.sigma * acc.eps_dot.sum();
  } else if (spec.kind == KernelKind::LSkipFullCov) {
    const Matrix c_sym = 0.5 * (acc.outer + acc.outer.transpose());
    const Matrix grad_t = sym_exp_frechet_adjoint(c.t_eig, c_sym);
    Eigen::Map<RowMajorMatrix> gm(grad.data() + spec.tail_offset(), spec.d_x, spec.d_x);
    gm = 0.5 * grad_t;
  }
  return grad;
}

// Gradient of the same functional with respect to each particle z_m; result
// is n_particles x d_z.
inline Matrix kernel_vjp_z(const KernelSpec& spec, const Vector& params,
                           const KernelCloudCache& c, const CotangentAccum& acc) {
  detail::check_kernel_params(spec, params);
  switch (spec.kind) {
    case KernelKind::Constant:
      return acc.d_sum;
    case KernelKind::Push:
      return mlp_vjp_input(spec.mlp, c.mlp_params, c.mlp_cache, acc.d_sum);
    case KernelKind::Skip:
      return acc.d_sum + mlp_vjp_input(spec.mlp, c.mlp_params, c.mlp_cache, acc.d_sum);
    case KernelKind::LSkip:
    case KernelKind::LSkipFullCov:
      return acc.d_sum * detail::kernel_w(spec, params) +
             mlp_vjp_input(spec.mlp, c.mlp_params, c.mlp_cache, acc.d_sum);
    case KernelKind::LSkipHetero: {
      Matrix mlp_cot(acc.d_sum.rows(), 2 * spec.d_x);
      mlp_cot.leftCols(spec.d_x) = acc.d_sum;
      mlp_cot.rightCols(spec.d_x) = c.sp_deriv.cwiseProduct(acc.eps_prod);
      return acc.d_sum * detail::kernel_w(spec, params) +
             mlp_vjp_input(spec.mlp, c.mlp_params, c.mlp_cache, mlp_cot);
    }
  }
  throw std::logic_error("kernel_vjp_z: unreachable");
}

// Single-point conveniences used by tests and gradient checking.

inline Vector kernel_sample(const KernelSpec& spec, const Vector& params, const Vector& z,
                            const Vector& eps) {
  if (z.size() != spec.d_z) throw std::invalid_argument("kernel_sample: z dimension mismatch");
  if (eps.size() != spec.d_x)
    throw std::invalid_argument("kernel_sample: eps dimension mismatch");
  const KernelCloudCache c = kernel_build_cache(spec, params, z.transpose());
  return kernel_sample_from_cache(spec, c, 0, eps);
}

inline double kernel_log_density(const KernelSpec& spec, const Vector& params, const Vector& x,
                                 const Vector& z) {
  const KernelCloudCache c = kernel_build_cache(spec, params, z.transpose());
  return kernel_log_density_batch(spec, c, x.transpose())(0, 0);
}

inline Vector kernel_grad_x_log_density(const KernelSpec& spec, const Vector& params,
                                        const Vector& x, const Vector& z) {
  const KernelCloudCache c = kernel_build_cache(spec, params, z.transpose());
  const Vector r = x - c.means.row(0).transpose();
  switch (spec.kind) {
    case KernelKind::LSkipHetero:
      return -(r.array() / c.sigmas.row(0).transpose().array().square()).matrix();
    case KernelKind::LSkipFullCov:
      return -(c.sigma_inv * r);
    default:
      return -r / (c.sigma * c.sigma);
  }
}

inline Vector kernel_vjp_theta_single(const KernelSpec& spec, const Vector& params,
                                      const Vector& z, const Vector& eps, const Vector& cot) {
  const KernelCloudCache c = kernel_build_cache(spec, params, z.transpose());
  CotangentAccum acc = CotangentAccum::zero(spec, 1);
  acc.add(spec, cot.transpose(), eps);
  return kernel_vjp_theta(spec, params, c, acc);
}

inline Vector kernel_vjp_z_single(const KernelSpec& spec, const Vector& params, const Vector& z,
                                  const Vector& eps, const Vector& cot) {
  const KernelCloudCache c = kernel_build_cache(spec, params, z.transpose());
  CotangentAccum acc = CotangentAccum::zero(spec, 1);
  acc.add(spec, cot.transpose(), eps);
  return kernel_vjp_z(spec, params, c, acc).row(0).transpose();
}

}  // namespace pvi
