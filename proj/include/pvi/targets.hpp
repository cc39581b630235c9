#pragma once

#include <pvi/data.hpp>
#include <pvi/mlp.hpp>

#include <memory>

namespace pvi {

// Unnormalized target log p(x, y) with analytic gradient in x. Additive
// constants are irrelevant to the flow but kept where cheap so free-energy
// estimates against normalized toy densities are directly interpretable.
class TargetModel {
 public:
  explicit TargetModel(Eigen::Index d_x) : d_x_(d_x) {}
  virtual ~TargetModel() = default;

  Eigen::Index d_x() const { return d_x_; }
  virtual double log_joint(const Vector& x) const = 0;
  virtual Vector grad_log_joint(const Vector& x) const = 0;

  // Batched evaluation over rows; either output may be null.
  virtual void eval_batch(const Matrix& x, Vector* log_p, Matrix* grad) const {
    if (log_p) log_p->resize(x.rows());
    if (grad) grad->resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector xi = x.row(i).transpose();
      if (log_p) (*log_p)[i] = log_joint(xi);
      if (grad) grad->row(i) = grad_log_joint(xi).transpose();
    }
  }

  // Exact sampling where the target is a closed-form density (toy problems).
  virtual bool has_exact_sampler() const { return false; }
  virtual Matrix sample_exact(Rng&, Eigen::Index) const {
    throw std::logic_error("target has no exact sampler");
  }

 protected:
  void check_dim(const Vector& x) const {
    if (x.size() != d_x_)
      throw std::invalid_argument("target: point has dimension " + std::to_string(x.size()) +
                                  ", expected " + std::to_string(d_x_));
  }

 private:
  Eigen::Index d_x_;
};

// Finite Gaussian mixture with full covariances; exact density, score, and
// sampler. Backbone of the 2-D toy suite.
class GaussianMixtureTarget : public TargetModel {
 public:
  GaussianMixtureTarget(Vector weights, std::vector<Vector> means, std::vector<Matrix> covs)
      : TargetModel(means.at(0).size()),
        log_w_(weights.size()),
        means_(std::move(means)),
        n_comp_(weights.size()) {
    if (static_cast<std::size_t>(weights.size()) != means_.size() ||
        means_.size() != covs.size())
      throw std::invalid_argument("mixture: component count mismatch");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("mixture: weights must sum to 1");
    const Eigen::Index d = d_x();
    for (std::size_t c = 0; c < covs.size(); ++c) {
      if (means_[c].size() != d || covs[c].rows() != d || covs[c].cols() != d)
        throw std::invalid_argument("mixture: dimension mismatch in component " +
                                    std::to_string(c));
      if (!(weights[static_cast<Eigen::Index>(c)] > 0.0))
        throw std::invalid_argument("mixture: weights must be positive");
      log_w_[static_cast<Eigen::Index>(c)] = std::log(weights[static_cast<Eigen::Index>(c)]);
      chols_.push_back(cholesky(covs[c]));
      const Matrix inv = chols_.back().transpose().triangularView<Eigen::Upper>().solve(
          Matrix(chols_.back().triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d))));
      invs_.push_back(inv);
      double logdet = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) logdet += 2.0 * std::log(chols_.back()(i, i));
      log_norm_.push_back(-0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) + logdet));
    }
    weights_ = std::move(weights);
  }

  double log_joint(const Vector& x) const override {
    check_dim(x);
    return logsumexp(component_logps(x));
  }

  Vector grad_log_joint(const Vector& x) const override {
    check_dim(x);
    const Vector lp = component_logps(x);
    const double total = logsumexp(lp);
    Vector g = Vector::Zero(d_x());
    for (Eigen::Index c = 0; c < n_comp_; ++c) {
      const double resp = std::exp(lp[c] - total);
      g.noalias() -= resp * (invs_[static_cast<std::size_t>(c)] *
                             (x - means_[static_cast<std::size_t>(c)]));
    }
    return g;
  }

  bool has_exact_sampler() const override { return true; }

  Matrix sample_exact(Rng& rng, Eigen::Index n) const override {
    Matrix out(n, d_x());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = rng.uniform();
      double acc = 0.0;
      Eigen::Index c = n_comp_ - 1;
      for (Eigen::Index j = 0; j < n_comp_; ++j) {
        acc += weights_[j];
        if (u < acc) {
          c = j;
          break;
        }
      }
      out.row(i) = (means_[static_cast<std::size_t>(c)] +
                    chols_[static_cast<std::size_t>(c)] * rng.normal_vector(d_x()))
                       .transpose();
    }
    return out;
  }

 private:
  Vector component_logps(const Vector& x) const {
    Vector lp(n_comp_);
    for (Eigen::Index c = 0; c < n_comp_; ++c) {
      const Vector r = x - means_[static_cast<std::size_t>(c)];
      lp[c] = log_w_[c] + log_norm_[static_cast<std::size_t>(c)] -
              0.5 * r.dot(invs_[static_cast<std::size_t>(c)] * r);
    }
    return lp;
  }

  Vector weights_, log_w_;
  std::vector<Vector> means_;
  std::vector<Matrix> chols_, invs_;
  std::vector<double> log_norm_;
  Eigen::Index n_comp_;
};

// Curved 2-D density: x1 ~ N(0, 2), x2 | x1 ~ N(x1^2 / 4, 1).
class BananaTarget : public TargetModel {
 public:
  BananaTarget() : TargetModel(2) {}

  double log_joint(const Vector& x) const override {
    check_dim(x);
    const double r = x[1] - x[0] * x[0] / 4.0;
    return -0.5 * r * r - x[0] * x[0] / 4.0 - 0.5 * std::log(2.0 * M_PI) -
           0.5 * std::log(2.0 * M_PI * 2.0);
  }

  Vector grad_log_joint(const Vector& x) const override {
    check_dim(x);
    const double r = x[1] - x[0] * x[0] / 4.0;
    Vector g(2);
    g[0] = r * x[0] / 2.0 - x[0] / 2.0;
    g[1] = -r;
    return g;
  }

  bool has_exact_sampler() const override { return true; }

  Matrix sample_exact(Rng& rng, Eigen::Index n) const override {
    Matrix out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x1 = std::sqrt(2.0) * rng.normal();
      out(i, 0) = x1;
      out(i, 1) = x1 * x1 / 4.0 + rng.normal();
    }
    return out;
  }
};

inline std::unique_ptr<TargetModel> make_banana() { return std::make_unique<BananaTarget>(); }

inline std::unique_ptr<TargetModel> make_xshape() {
  Matrix c1(2, 2), c2(2, 2);
  c1 << 2.0, 1.8, 1.8, 2.0;
  c2 << 2.0, -1.8, -1.8, 2.0;
  Vector w(2);
  w << 0.5, 0.5;
  return std::make_unique<GaussianMixtureTarget>(
      w, std::vector<Vector>{Vector::Zero(2), Vector::Zero(2)}, std::vector<Matrix>{c1, c2});
}

inline std::unique_ptr<TargetModel> make_multimodal() {
  Vector w(4);
  w << 0.125, 0.125, 0.5, 0.25;
  std::vector<Vector> means(4, Vector(2));
  means[0] << 2.0, 2.0;
  means[1] << -2.0, -2.0;
  means[2] << 2.0, -2.0;
  means[3] << -2.0, 2.0;
  return std::make_unique<GaussianMixtureTarget>(
      w, means, std::vector<Matrix>(4, Matrix::Identity(2, 2)));
}

inline std::unique_ptr<TargetModel> make_bimodal(double mu) {
  Vector w(2);
  w << 0.5, 0.5;
  std::vector<Vector> means(2, Vector(2));
  means[0] << mu, mu;
  means[1] << -mu, -mu;
  return std::make_unique<GaussianMixtureTarget>(
      w, means, std::vector<Matrix>(2, Matrix::Identity(2, 2)));
}

inline std::unique_ptr<TargetModel> make_std_gaussian(Eigen::Index d) {
  Vector w(1);
  w << 1.0;
  return std::make_unique<GaussianMixtureTarget>(
      w, std::vector<Vector>{Vector::Zero(d)}, std::vector<Matrix>{Matrix::Identity(d, d)});
}

// Bayesian logistic regression: y | x, w ~ Bernoulli(sigmoid(<w, [1, feat]>)),
// prior w ~ N(0, 100 I). The intercept is the first coordinate.
class LogisticRegressionTarget : public TargetModel {
 public:
  explicit LogisticRegressionTarget(const Dataset& data, double prior_var = 100.0)
      : TargetModel(data.d() + 1), prior_var_(prior_var) {
    for (Eigen::Index i = 0; i < data.n(); ++i)
      if (data.responses[i] != 0.0 && data.responses[i] != 1.0)
        throw std::invalid_argument("logistic regression: responses must be 0 or 1 (row " +
                                    std::to_string(i) + ")");
    x_bar_.resize(data.n(), data.d() + 1);
    x_bar_.col(0).setOnes();
    x_bar_.rightCols(data.d()) = data.features;
    y_ = data.responses;
  }

  double log_joint(const Vector& w) const override {
    check_dim(w);
    const Vector a = x_bar_ * w;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) ll += y_[i] * a[i] - softplus(a[i]);
    return ll + log_prior(w);
  }

  Vector grad_log_joint(const Vector& w) const override {
    check_dim(w);
    const Vector a = x_bar_ * w;
    Vector resid(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) resid[i] = y_[i] - sigmoid(a[i]);
    return x_bar_.transpose() * resid - w / prior_var_;
  }

  void eval_batch(const Matrix& x, Vector* log_p, Matrix* grad) const override {
    const Matrix a = x_bar_ * x.transpose();  // n_data x n_points
    if (log_p) {
      log_p->resize(x.rows());
      for (Eigen::Index p = 0; p < x.rows(); ++p) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
          ll += y_[i] * a(i, p) - softplus(a(i, p));
        const Vector w = x.row(p).transpose();
        (*log_p)[p] = ll + log_prior(w);
      }
    }
    if (grad) {
      Matrix resid(a.rows(), a.cols());
      for (Eigen::Index p = 0; p < a.cols(); ++p)
        for (Eigen::Index i = 0; i < a.rows(); ++i) resid(i, p) = y_[i] - sigmoid(a(i, p));
      *grad = (x_bar_.transpose() * resid).transpose() - x / prior_var_;
    }
  }

 private:
  double log_prior(const Vector& w) const {
    return -0.5 * w.squaredNorm() / prior_var_ -
           0.5 * static_cast<double>(d_x()) * std::log(2.0 * M_PI * prior_var_);
  }

  Matrix x_bar_;
  Vector y_;
  double prior_var_;
};

inline std::unique_ptr<TargetModel> make_logistic_regression(const Dataset& data) {
  return std::make_unique<LogisticRegressionTarget>(data);
}

// Bayesian one-hidden-layer regression network. The sampled vector x packs
// the network as [vec(W2), b2, vec(W1), b1] with f_x(o) = W2^T relu(W1^T o + b1) + b2,
// Gaussian likelihood with fixed noise scale, prior N(0, prior_var I).
class BnnRegressionTarget : public TargetModel {
 public:
  BnnRegressionTarget(const Dataset& data, Eigen::Index d_in, Eigen::Index d_h,
                      double noise_sigma = 0.01, double prior_var = 25.0)
      : TargetModel(d_in * d_h + 2 * d_h + 1),
        d_in_(d_in),
        d_h_(d_h),
        noise_sigma_(noise_sigma),
        prior_var_(prior_var),
        obs_(data.features),
        y_(data.responses) {
    if (data.d() != d_in)
      throw std::invalid_argument("bnn: dataset has " + std::to_string(data.d()) +
                                  " features, architecture expects " + std::to_string(d_in));
    net_.sizes = {d_in, d_h, 1};
    net_.act = Activation::Relu;
  }

  // x layout -> MlpParams layout ([W1' row-major, b1, W2' row-major, b2]).
  Vector to_net(const Vector& x) const {
    Vector p(net_.param_count());
    const Eigen::Index nw1 = d_in_ * d_h_;
    p.head(nw1) = x.segment(d_h_ + 1, nw1);          // vec(W1) == W1^T row-major
    p.segment(nw1, d_h_) = x.tail(d_h_);             // b1
    p.segment(nw1 + d_h_, d_h_) = x.head(d_h_);      // vec(W2) == W2^T row-major
    p[nw1 + 2 * d_h_] = x[d_h_];                     // b2
    return p;
  }

  Vector from_net(const Vector& p) const {
    Vector x(d_x());
    const Eigen::Index nw1 = d_in_ * d_h_;
    x.segment(d_h_ + 1, nw1) = p.head(nw1);
    x.tail(d_h_) = p.segment(nw1, d_h_);
    x.head(d_h_) = p.segment(nw1 + d_h_, d_h_);
    x[d_h_] = p[nw1 + 2 * d_h_];
    return x;
  }

  // Predictions of the network encoded by x on arbitrary inputs.
  Vector predict(const Vector& x, const Matrix& inputs) const {
    check_dim(x);
    return mlp_forward(net_, to_net(x), inputs).col(0);
  }

  double log_joint(const Vector& x) const override {
    check_dim(x);
    const Vector pred = predict(x, obs_);
    const double sse = (y_ - pred).squaredNorm();
    return -0.5 * sse / (noise_sigma_ * noise_sigma_) -
           static_cast<double>(y_.size()) * std::log(noise_sigma_ * std::sqrt(2.0 * M_PI)) +
           log_prior(x);
  }

  Vector grad_log_joint(const Vector& x) const override {
    check_dim(x);
    const Vector p = to_net(x);
    const MlpCache cache = mlp_forward_cached(net_, p, obs_);
    const Matrix cot = (y_ - cache.output.col(0)) / (noise_sigma_ * noise_sigma_);
    const Vector g_net = mlp_vjp_params(net_, p, cache, cot);
    return from_net(g_net) - x / prior_var_;
  }

 private:
  double log_prior(const Vector& x) const {
    return -0.5 * x.squaredNorm() / prior_var_ -
           0.5 * static_cast<double>(d_x()) * std::log(2.0 * M_PI * prior_var_);
  }

  Eigen::Index d_in_, d_h_;
  double noise_sigma_, prior_var_;
  Matrix obs_;
  Vector y_;
  MlpSpec net_;
};

inline std::unique_ptr<BnnRegressionTarget> make_bnn_regression(const Dataset& data,
                                                                Eigen::Index d_in,
                                                                Eigen::Index d_h,
                                                                double noise_sigma = 0.01,
                                                                double prior_var = 25.0) {
  return std::make_unique<BnnRegressionTarget>(data, d_in, d_h, noise_sigma, prior_var);
}

}  // namespace pvi
