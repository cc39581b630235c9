#include <catch2/catch_amalgamated.hpp>

#include <pvi/numerics.hpp>

#include "oracles.hpp"

using namespace pvi;

TEST_CASE("rng is reproducible from the seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  REQUIRE(any_diff);
}

TEST_CASE("rng uniform stays in the half-open unit interval") {
  Rng r(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("rng uniform_int covers its range and rejects zero") {
  Rng r(7);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) counts[static_cast<std::size_t>(r.uniform_int(5))]++;
  for (int k = 0; k < 5; ++k) REQUIRE(counts[static_cast<std::size_t>(k)] > 9000);
  REQUIRE_THROWS_AS(r.uniform_int(0), std::invalid_argument);
}

TEST_CASE("normal draws match standard moments within CLT bounds") {
  Rng r(123);
  const Eigen::Index n = 1000000;
  Vector x = r.normal_vector(n);
  REQUIRE(x.allFinite());
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / static_cast<double>(n - 1);
  // Standard errors: sd/sqrt(n) = 1e-3 for the mean, ~sqrt(2/n) = 1.4e-3 for
  // the variance; bounds are ~7 standard errors.
  REQUIRE(std::abs(mean) < 0.007);
  REQUIRE(std::abs(var - 1.0) < 0.01);
  const double skew = (x.array() - mean).cube().mean();
  REQUIRE(std::abs(skew) < 0.02);
}

TEST_CASE("forked sub-streams are uncorrelated") {
  Rng root(99);
  Rng s1 = root.fork(1), s2 = root.fork(2);
  const Eigen::Index n = 100000;
  Vector a = s1.normal_vector(n), b = s2.normal_vector(n);
  const double corr = (a.array() - a.mean()).cwiseProduct(b.array() - b.mean()).sum() /
                      std::sqrt((a.array() - a.mean()).square().sum() *
                                (b.array() - b.mean()).square().sum());
  REQUIRE(std::abs(corr) < 0.02);
  // Same key tuple gives the same stream; order of keys matters.
  Rng s1b = root.fork(1);
  REQUIRE(s1b.next_u64() == root.fork(1).next_u64());
  REQUIRE(root.fork(1, 2).next_u64() != root.fork(2, 1).next_u64());
}

TEST_CASE("permutation is a bijection") {
  Rng r(5);
  auto p = r.permutation(257);
  std::vector<bool> seen(257, false);
  for (auto i : p) {
    REQUIRE(i >= 0);
    REQUIRE(i < 257);
    REQUIRE(!seen[static_cast<std::size_t>(i)]);
    seen[static_cast<std::size_t>(i)] = true;
  }
}

TEST_CASE("logsumexp is shift invariant and overflow safe") {
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const double base = logsumexp(v);
  Vector shifted = v.array() + 500.0;
  REQUIRE(std::abs((logsumexp(shifted) - 500.0) - base) < 1e-12);
  Vector huge(2);
  huge << -1000.0, 0.0;
  REQUIRE(std::abs(logsumexp(huge) - 0.0) < 1e-12);
  Vector big(2);
  big << 1000.0, 1000.0;
  REQUIRE(std::abs(logsumexp(big) - (1000.0 + std::log(2.0))) < 1e-9);
  REQUIRE_THROWS_AS(logsumexp(Vector()), std::invalid_argument);
}

TEST_CASE("logaddexp agrees with the naive formula in the safe range") {
  REQUIRE(std::abs(logaddexp(0.3, -0.7) - std::log(std::exp(0.3) + std::exp(-0.7))) < 1e-14);
  const double ninf = -std::numeric_limits<double>::infinity();
  REQUIRE(logaddexp(ninf, 2.0) == 2.0);
  REQUIRE(logaddexp(2.0, ninf) == 2.0);
}

TEST_CASE("softplus and sigmoid are stable at extremes") {
  REQUIRE(std::abs(softplus(0.0) - std::log(2.0)) < 1e-15);
  REQUIRE(softplus(800.0) == 800.0);
  REQUIRE(softplus(-800.0) >= 0.0);
  REQUIRE(std::isfinite(softplus(-800.0)));
  REQUIRE(std::abs(sigmoid(0.0) - 0.5) < 1e-15);
  REQUIRE(sigmoid(-800.0) >= 0.0);
  REQUIRE(std::abs(sigmoid(800.0) - 1.0) < 1e-15);
}

TEST_CASE("sym_matrix_exp matches a Taylor series oracle") {
  Rng r(11);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = r.normal_matrix(5, 5);
    Matrix s = 0.5 * (a + a.transpose());
    Matrix got = sym_matrix_exp(s);
    Matrix want = oracle::taylor_expm(s);
    REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-11 * want.cwiseAbs().maxCoeff());
    // Result is symmetric positive definite.
    REQUIRE((got - got.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(got);
    REQUIRE(es.eigenvalues().minCoeff() > 0.0);
  }
  REQUIRE((sym_matrix_exp(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-14);
}

TEST_CASE("sym_matrix_exp rejects bad input") {
  REQUIRE_THROWS_AS(sym_matrix_exp(Matrix::Zero(2, 3)), std::invalid_argument);
  Matrix ns(2, 2);
  ns << 0.0, 1.0, 0.0, 0.0;
  REQUIRE_THROWS_AS(sym_matrix_exp(ns), std::invalid_argument);
}

TEST_CASE("sym_exp_frechet_adjoint matches finite differences") {
  Rng r(21);
  Matrix a = r.normal_matrix(4, 4);
  Matrix s = 0.5 * (a + a.transpose());
  Matrix c = r.normal_matrix(4, 4);  // arbitrary cotangent, not symmetric
  const SymEig e = sym_eig(s, "test");
  const Matrix adj = sym_exp_frechet_adjoint(e, c);
  // Check <Dexp_S(H), C> == <H, adj(C)> for symmetric directions H.
  for (int trial = 0; trial < 4; ++trial) {
    Matrix hr = r.normal_matrix(4, 4);
    Matrix h = 0.5 * (hr + hr.transpose());
    const double t = 1e-6;
    const double fd = ((oracle::taylor_expm(s + t * h) - oracle::taylor_expm(s - t * h)) / (2 * t))
                          .cwiseProduct(c)
                          .sum();
    const double an = h.cwiseProduct(adj).sum();
    REQUIRE(oracle::rel_err(an, fd, 1e-6) < 1e-5);
  }
}

TEST_CASE("sym_exp_frechet_adjoint handles repeated eigenvalues") {
  // S = I has a fully degenerate spectrum; Dexp_I(H) = e * H for symmetric H.
  Matrix s = Matrix::Identity(3, 3);
  const SymEig e = sym_eig(s, "test");
  Matrix c(3, 3);
  c.setZero();
  c(0, 1) = 1.0;
  c(1, 0) = 1.0;
  const Matrix adj = sym_exp_frechet_adjoint(e, c);
  REQUIRE((adj - std::exp(1.0) * c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cholesky reconstructs SPD matrices") {
  Rng r(31);
  Matrix a = r.normal_matrix(6, 6);
  Matrix spd = a * a.transpose() + 6.0 * Matrix::Identity(6, 6);
  Matrix l = cholesky(spd);
  REQUIRE((l * l.transpose() - spd).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = i + 1; j < 6; ++j) REQUIRE(l(i, j) == 0.0);
}

TEST_CASE("cholesky names the failing pivot") {
  Matrix bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1.0;
  try {
    cholesky(bad);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("index 1") != std::string::npos);
  }
  REQUIRE_THROWS_AS(cholesky(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("require_finite reports the offending coordinate") {
  Matrix m = Matrix::Zero(2, 2);
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    require_finite(m, "probe");
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    const std::string w = e.what();
    REQUIRE(w.find("probe") != std::string::npos);
    REQUIRE(w.find("(1, 0)") != std::string::npos);
  }
  const Matrix ok = Matrix::Ones(2, 2);
  REQUIRE_NOTHROW(require_finite(ok, "ok"));
}
