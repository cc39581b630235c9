#pragma once

#include <pvi/numerics.hpp>

#include <vector>

namespace pvi {

enum class Activation { LeakyRelu, Relu, Identity };
enum class OutputTransform { Identity, SoftplusPlusEps };

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fully connected network: sizes = [d_in, h_1, ..., d_out], the hidden
// activation applied after every layer except the last, and an optional
// elementwise transform on the output (softplus(x) + eps for strictly
// positive outputs such as scales).
struct MlpSpec {
  std::vector<Eigen::Index> sizes;
  Activation act = Activation::LeakyRelu;
  double leaky_slope = 0.01;
  OutputTransform out_transform = OutputTransform::Identity;
  double out_eps = 1e-8;

  void validate() const {
    if (sizes.size() < 2)
      throw std::invalid_argument("MlpSpec: need at least input and output sizes");
    for (auto s : sizes)
      if (s <= 0) throw std::invalid_argument("MlpSpec: layer sizes must be positive");
    if (leaky_slope < 0.0 || leaky_slope >= 1.0)
      throw std::invalid_argument("MlpSpec: leaky_slope must lie in [0, 1)");
  }

  Eigen::Index n_layers() const { return static_cast<Eigen::Index>(sizes.size()) - 1; }
  Eigen::Index d_in() const { return sizes.front(); }
  Eigen::Index d_out() const { return sizes.back(); }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += sizes[l + 1] * sizes[l] + sizes[l + 1];
    return n;
  }
};

// Standard two-hidden-layer architecture used by the kernel networks.
inline MlpSpec make_mlp_spec(Eigen::Index d_in, Eigen::Index d_hidden, Eigen::Index d_out,
                             OutputTransform out = OutputTransform::Identity) {
  MlpSpec s;
  s.sizes = {d_in, d_hidden, d_hidden, d_out};
  s.out_transform = out;
  s.validate();
  return s;
}

namespace detail {

inline void check_params(const MlpSpec& spec, const Vector& params) {
  if (params.size() != spec.param_count())
    throw std::invalid_argument("mlp: parameter vector has length " +
                                std::to_string(params.size()) + ", expected " +
                                std::to_string(spec.param_count()));
}

// Weight matrices are stored row-major in the flat vector, each followed by
// its bias: [W_0, b_0, W_1, b_1, ...].
inline Eigen::Map<const RowMajorMatrix> weight(const MlpSpec& spec, const Vector& params,
                                               Eigen::Index layer, Eigen::Index offset) {
  return {params.data() + offset, spec.sizes[static_cast<std::size_t>(layer) + 1],
          spec.sizes[static_cast<std::size_t>(layer)]};
}

inline double act_forward(Activation a, double slope, double z) {
  switch (a) {
    case Activation::LeakyRelu: return z >= 0.0 ? z : slope * z;
    case Activation::Relu: return z >= 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  return z;
}

inline double act_deriv(Activation a, double slope, double z) {
  switch (a) {
    case Activation::LeakyRelu: return z >= 0.0 ? 1.0 : slope;
    case Activation::Relu: return z >= 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

// Everything the backward pass needs, captured during a forward pass over a
// batch of inputs (one row per sample).
struct MlpCache {
  std::vector<Matrix> layer_in;   // input to each layer; layer_in[0] is the batch
  std::vector<Matrix> pre;        // pre-activation of each layer
  Matrix output;                  // after the output transform
};

inline Vector mlp_init(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  Vector params(spec.param_count());
  Eigen::Index off = 0;
  for (Eigen::Index l = 0; l < spec.n_layers(); ++l) {
    const Eigen::Index fan_in = spec.sizes[static_cast<std::size_t>(l)];
    const Eigen::Index fan_out = spec.sizes[static_cast<std::size_t>(l) + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < fan_out * fan_in; ++i)
      params[off + i] = bound * (2.0 * rng.uniform() - 1.0);
    off += fan_out * fan_in;
    params.segment(off, fan_out).setZero();
    off += fan_out;
  }
  return params;
}

inline MlpCache mlp_forward_cached(const MlpSpec& spec, const Vector& params, const Matrix& x) {
  detail::check_params(spec, params);
  if (x.cols() != spec.d_in())
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(spec.d_in()));
  MlpCache cache;
  const Eigen::Index n_layers = spec.n_layers();
  cache.layer_in.resize(static_cast<std::size_t>(n_layers));
  cache.pre.resize(static_cast<std::size_t>(n_layers));
  Matrix a = x;
  Eigen::Index off = 0;
  for (Eigen::Index l = 0; l < n_layers; ++l) {
    const Eigen::Index out = spec.sizes[static_cast<std::size_t>(l) + 1];
    const Eigen::Index in = spec.sizes[static_cast<std::size_t>(l)];
    const auto w = detail::weight(spec, params, l, off);
    off += out * in;
    const auto b = params.segment(off, out);
    off += out;
    cache.layer_in[static_cast<std::size_t>(l)] = a;
    Matrix z = a * w.transpose();
    z.rowwise() += b.transpose();
    cache.pre[static_cast<std::size_t>(l)] = z;
    if (l + 1 < n_layers) {
      a = z.unaryExpr([&](double v) { return detail::act_forward(spec.act, spec.leaky_slope, v); });
    } else {
      a = std::move(z);
    }
  }
  if (spec.out_transform == OutputTransform::SoftplusPlusEps)
    cache.output = a.unaryExpr([&](double v) { return softplus(v) + spec.out_eps; });
  else
    cache.output = std::move(a);
  return cache;
}

inline Matrix mlp_forward(const MlpSpec& spec, const Vector& params, const Matrix& x) {
  return mlp_forward_cached(spec, params, x).output;
}

// Backward pass for <output, cotangent> summed over the batch. Either output
// may be null to skip its computation.
inline void mlp_vjp(const MlpSpec& spec, const Vector& params, const MlpCache& cache,
                    const Matrix& cotangent, Vector* grad_params, Matrix* grad_input) {
  detail::check_params(spec, params);
  const Eigen::Index n_layers = spec.n_layers();
  if (cotangent.rows() != cache.output.rows() || cotangent.cols() != spec.d_out())
    throw std::invalid_argument("mlp_vjp: cotangent shape mismatch");
  Matrix g = cotangent;
  if (spec.out_transform == OutputTransform::SoftplusPlusEps) {
    const Matrix& z_last = cache.pre[static_cast<std::size_t>(n_layers - 1)];
    g = g.cwiseProduct(z_last.unaryExpr([](double v) { return sigmoid(v); }));
  }
  if (grad_params) grad_params->setZero(spec.param_count());

  std::vector<Eigen::Index> w_off(static_cast<std::size_t>(n_layers));
  Eigen::Index off = 0;
  for (Eigen::Index l = 0; l < n_layers; ++l) {
    w_off[static_cast<std::size_t>(l)] = off;
    off += spec.sizes[static_cast<std::size_t>(l) + 1] * spec.sizes[static_cast<std::size_t>(l)] +
           spec.sizes[static_cast<std::size_t>(l) + 1];
  }

  for (Eigen::Index l = n_layers - 1; l >= 0; --l) {
    const Eigen::Index out = spec.sizes[static_cast<std::size_t>(l) + 1];
    const Eigen::Index in = spec.sizes[static_cast<std::size_t>(l)];
    const auto w = detail::weight(spec, params, l, w_off[static_cast<std::size_t>(l)]);
    if (grad_params) {
      Eigen::Map<RowMajorMatrix> gw(grad_params->data() + w_off[static_cast<std::size_t>(l)], out,
                                    in);
      gw = g.transpose() * cache.layer_in[static_cast<std::size_t>(l)];
      grad_params->segment(w_off[static_cast<std::size_t>(l)] + out * in, out) =
          g.colwise().sum();
    }
    if (l == 0 && !grad_input) break;
    Matrix upstream = g * w;
    if (l > 0) {
      const Matrix& z_prev = cache.pre[static_cast<std::size_t>(l - 1)];
      g = upstream.cwiseProduct(z_prev.unaryExpr(
          [&](double v) { return detail::act_deriv(spec.act, spec.leaky_slope, v); }));
    } else {
      *grad_input = std::move(upstream);
    }
  }
}

inline Vector mlp_vjp_params(const MlpSpec& spec, const Vector& params, const MlpCache& cache,
                             const Matrix& cotangent) {
  Vector gp;
  mlp_vjp(spec, params, cache, cotangent, &gp, nullptr);
  return gp;
}

inline Matrix mlp_vjp_input(const MlpSpec& spec, const Vector& params, const MlpCache& cache,
                            const Matrix& cotangent) {
  Matrix gi;
  mlp_vjp(spec, params, cache, cotangent, nullptr, &gi);
  return gi;
}

}  // namespace pvi
