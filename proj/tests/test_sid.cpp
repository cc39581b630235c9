#include <catch2/catch_amalgamated.hpp>

#include <pvi/sid.hpp>

#include "oracles.hpp"

using namespace pvi;

namespace {

struct SidFixture {
  KernelSpec spec;
  Vector params;
  Matrix cloud;
};

SidFixture sample_sid(KernelKind kind, Rng& rng, Eigen::Index n_particles) {
  KernelSpec spec = kind == KernelKind::Constant ? make_constant_kernel(2, 0.8)
                    : kind == KernelKind::Skip   ? make_kernel(kind, 2, 2, 6)
                                                 : make_kernel(kind, 2, 3, 6);
  Vector params = kernel_init(spec, rng);
  if (spec.param_count() > 0) params += 0.3 * rng.normal_vector(spec.param_count());
  Matrix cloud = 1.5 * rng.normal_matrix(n_particles, spec.d_z);
  return {spec, params, cloud};
}

// Literal mixture density: average the per-particle Gaussian densities.
double naive_mixture_logpdf(const KernelSpec& spec, const Vector& params, const Matrix& cloud,
                            const Vector& x) {
  long double acc = 0.0L;
  for (Eigen::Index m = 0; m < cloud.rows(); ++m) {
    const double lp = kernel_log_density(spec, params, x, cloud.row(m).transpose());
    acc += std::exp(static_cast<long double>(lp));
  }
  return static_cast<double>(std::log(acc / static_cast<long double>(cloud.rows())));
}

}  // namespace

TEST_CASE("mixture log density matches the naive average") {
  Rng rng(301);
  for (auto kind : {KernelKind::Constant, KernelKind::Push, KernelKind::LSkipHetero,
                    KernelKind::LSkipFullCov}) {
    auto fx = sample_sid(kind, rng, 7);
    SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
    for (int t = 0; t < 3; ++t) {
      Vector x = rng.normal_vector(fx.spec.d_x);
      const double got = sid_log_density(model, x);
      const double want = naive_mixture_logpdf(fx.spec, fx.params, fx.cloud, x);
      REQUIRE(std::abs(got - want) < 1e-10 * (1.0 + std::abs(want)));
    }
  }
}

TEST_CASE("mixture log density survives far tails without overflow") {
  Rng rng(303);
  auto fx = sample_sid(KernelKind::Constant, rng, 5);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  Vector far = Vector::Constant(2, 60.0);
  const double lp = sid_log_density(model, far);
  REQUIRE(std::isfinite(lp));
  REQUIRE(lp < -1000.0);
  // Score stays finite out there too.
  REQUIRE(sid_score(model, far).allFinite());
}

TEST_CASE("mixture score matches finite differences of the log density") {
  Rng rng(307);
  for (auto kind : {KernelKind::Constant, KernelKind::Push, KernelKind::LSkip,
                    KernelKind::LSkipHetero, KernelKind::LSkipFullCov}) {
    auto fx = sample_sid(kind, rng, 6);
    SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
    Vector x = rng.normal_vector(fx.spec.d_x);
    Vector got = sid_score(model, x);
    Vector want = oracle::fd_gradient(
        [&](const Vector& p) { return sid_log_density(model, p); }, x, 1e-6);
    INFO(kernel_kind_name(kind));
    REQUIRE(oracle::max_rel_err(got, want, 1e-4) < 1e-5);
  }
}

TEST_CASE("single particle reduces the mixture to its kernel") {
  Rng rng(311);
  auto fx = sample_sid(KernelKind::Push, rng, 1);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  Vector x = rng.normal_vector(3);
  REQUIRE(std::abs(sid_log_density(model, x) -
                   kernel_log_density(fx.spec, fx.params, x, fx.cloud.row(0).transpose())) <
          1e-12);
}

TEST_CASE("duplicated particles do not change the density") {
  Rng rng(313);
  auto fx = sample_sid(KernelKind::Push, rng, 4);
  SidModel base = make_sid(fx.spec, fx.params, fx.cloud);
  Matrix doubled(8, fx.cloud.cols());
  doubled << fx.cloud, fx.cloud;
  SidModel twice = make_sid(fx.spec, fx.params, doubled);
  Vector x = rng.normal_vector(3);
  REQUIRE(std::abs(sid_log_density(base, x) - sid_log_density(twice, x)) < 1e-12);
}

TEST_CASE("blunted score is the gradient of log(q + gamma)") {
  Rng rng(317);
  auto fx = sample_sid(KernelKind::Push, rng, 5);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  for (double gamma : {1e-6, 1e-2, 1.0}) {
    Vector x = rng.normal_vector(3);
    Vector got = sid_score_gamma(model, x, gamma);
    Vector want = oracle::fd_gradient(
        [&](const Vector& p) {
          return std::log(std::exp(sid_log_density(model, p)) + gamma);
        },
        x, 1e-6);
    INFO("gamma = " << gamma);
    REQUIRE(oracle::max_rel_err(got, want, 1e-5) < 1e-4);
  }
}

TEST_CASE("blunted score reduces to the score at gamma zero") {
  Rng rng(331);
  auto fx = sample_sid(KernelKind::LSkipHetero, rng, 5);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  Vector x = rng.normal_vector(3);
  REQUIRE((sid_score_gamma(model, x, 0.0) - sid_score(model, x)).cwiseAbs().maxCoeff() == 0.0);
  // And smoothly approaches it for tiny gamma.
  REQUIRE((sid_score_gamma(model, x, 1e-300) - sid_score(model, x)).cwiseAbs().maxCoeff() <
          1e-10);
}

TEST_CASE("gamma correction is the gradient of -gamma over (q + gamma)") {
  Rng rng(337);
  auto fx = sample_sid(KernelKind::Push, rng, 5);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  const double gamma = 0.05;
  Vector x = rng.normal_vector(3);
  SidEval ev = sid_eval(model, x.transpose());
  Vector got = sid_gamma_correction(ev, gamma).row(0).transpose();
  Vector want = oracle::fd_gradient(
      [&](const Vector& p) {
        return -gamma / (std::exp(sid_log_density(model, p)) + gamma);
      },
      x, 1e-6);
  REQUIRE(oracle::max_rel_err(got, want, 1e-5) < 1e-4);
}

TEST_CASE("gamma correction obeys the gradient bound") {
  Rng rng(347);
  auto fx = sample_sid(KernelKind::Push, rng, 6);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  for (double gamma : {1e-3, 0.1, 2.0}) {
    Matrix x = 3.0 * rng.normal_matrix(50, 3);
    SidEval ev = sid_eval(model, x);
    Matrix corr = sid_gamma_correction(ev, gamma);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double grad_q_norm = std::exp(ev.log_q[i]) * ev.score.row(i).norm();
      REQUIRE(corr.row(i).norm() <= grad_q_norm / gamma + 1e-12);
    }
  }
}

TEST_CASE("gamma correction vanishes as gamma goes to zero") {
  Rng rng(349);
  auto fx = sample_sid(KernelKind::Push, rng, 4);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  // Points drawn from the model itself, where q is bounded well away from 0.
  Matrix x = sid_sample(model, rng, 10);
  SidEval ev = sid_eval(model, x);
  REQUIRE(sid_gamma_correction(ev, 0.0).cwiseAbs().maxCoeff() == 0.0);
  const double q_min = ev.log_q.array().exp().minCoeff();
  const double gamma = 1e-8 * q_min;
  REQUIRE(sid_gamma_correction(ev, gamma).cwiseAbs().maxCoeff() <
          1e-7 * (1.0 + ev.score.cwiseAbs().maxCoeff()));
}

TEST_CASE("mixture sampling matches mixture moments") {
  Rng rng(353);
  auto fx = sample_sid(KernelKind::Push, rng, 3);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  const Eigen::Index n = 400000;
  Matrix draws = sid_sample(model, rng, n);
  const Vector want_mean = model.cache.means.colwise().mean().transpose();
  const Vector got_mean = draws.colwise().mean().transpose();
  // Mixture variance per coordinate: sigma^2 + spread of the means.
  for (Eigen::Index d = 0; d < 3; ++d) {
    const double spread =
        (model.cache.means.col(d).array() - want_mean[d]).square().mean();
    const double want_var = model.cache.sigma * model.cache.sigma + spread;
    const double got_var =
        (draws.col(d).array() - got_mean[d]).square().sum() / static_cast<double>(n - 1);
    REQUIRE(std::abs(got_mean[d] - want_mean[d]) <
            6.0 * std::sqrt(want_var / static_cast<double>(n)));
    REQUIRE(std::abs(got_var - want_var) < 8.0 * want_var * std::sqrt(2.0 / static_cast<double>(n)));
  }
}

TEST_CASE("batched evaluation agrees with scalar calls") {
  Rng rng(359);
  auto fx = sample_sid(KernelKind::LSkipFullCov, rng, 5);
  SidModel model = make_sid(fx.spec, fx.params, fx.cloud);
  Matrix x = rng.normal_matrix(7, 3);
  SidEval ev = sid_eval(model, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    REQUIRE(std::abs(ev.log_q[i] - sid_log_density(model, x.row(i).transpose())) < 1e-12);
    REQUIRE((ev.score.row(i).transpose() - sid_score(model, x.row(i).transpose()))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
  }
}

TEST_CASE("empty cloud is rejected") {
  Rng rng(361);
  auto fx = sample_sid(KernelKind::Push, rng, 2);
  REQUIRE_THROWS_AS(make_sid(fx.spec, fx.params, Matrix(0, 2)), std::invalid_argument);
}
