#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tfa/metrics.hpp"
#include "tfa/rng.hpp"

using namespace tfa;

namespace {

Eigen::MatrixXd random_positive(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(0.05, 2.0);
  return m;
}

double bsq_of(const Eigen::MatrixXd& mag, double eps = kCvEps) {
  const auto means = col_row_means(mag);
  const auto stds = col_row_stds(mag, means);
  const auto q = quality_coeffs(balanced_cv(means.mu_f, stds.sigma_f, eps),
                                balanced_cv(means.mu_t, stds.sigma_t, eps));
  return bsq(q.q_f, q.q_t);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("means: uniform, single cell, scaling") {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 8);
  const auto m = col_row_means(ones);
  CHECK(m.mu_f.isApproxToConstant(1.0));
  CHECK(m.mu_t.isApproxToConstant(1.0));

  Eigen::MatrixXd single = Eigen::MatrixXd::Zero(3, 5);
  single(0, 0) = 2.5;
  const auto ms = col_row_means(single);
  CHECK(ms.mu_f(0) == 0.5);   // 2.5 / 5
  CHECK(ms.mu_t(0) == doctest::Approx(2.5 / 3.0).epsilon(1e-15));
  CHECK(ms.mu_f.tail(2).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(3);
  const Eigen::MatrixXd a = random_positive(rng, 4, 6);
  const auto ma = col_row_means(a);
  const auto mk = col_row_means(3.0 * a);
  CHECK((mk.mu_f - 3.0 * ma.mu_f).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("stds: constant, direct value, scaling") {
  const auto mc = col_row_means(Eigen::MatrixXd::Constant(3, 4, 0.7));
  const auto sc = col_row_stds(Eigen::MatrixXd::Constant(3, 4, 0.7), mc);
  CHECK(sc.sigma_f.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sc.sigma_t.cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd two(2, 2);
  two << 0.0, 2.0, 0.0, 2.0;
  const auto mt = col_row_means(two);
  const auto st = col_row_stds(two, mt);
  CHECK(st.sigma_f(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  Rng rng(5);
  const Eigen::MatrixXd a = random_positive(rng, 5, 7);
  const auto sa = col_row_stds(a, col_row_means(a));
  const auto sk = col_row_stds(2.0 * a, col_row_means(2.0 * a));
  CHECK((sk.sigma_f - 2.0 * sa.sigma_f).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("balanced_cv guard semantics") {
  Eigen::VectorXd mu(3), sigma(3);
  mu << 1.0, 0.0, 2.0;
  sigma << 0.0, 0.5, 1.0;
  const Eigen::VectorXd cv = balanced_cv(mu, sigma, 1e-12);
  CHECK(cv(0) == doctest::Approx(1e12).epsilon(1e-9));
  CHECK(cv(1) == 0.0);
  CHECK(cv(2) == doctest::Approx(2.0).epsilon(1e-9));
  // joint scaling leaves the ratio essentially unchanged
  const Eigen::VectorXd scaled = balanced_cv(5.0 * mu, 5.0 * sigma, 1e-12);
  CHECK(scaled(2) == doctest::Approx(cv(2)).epsilon(1e-9));
}

TEST_CASE("quality_coeffs examples") {
  const Eigen::VectorXd constant = Eigen::VectorXd::Constant(6, 3.3);
  Eigen::VectorXd spiked(4);
  spiked << 1.0, 0.0, 0.0, 0.0;
  const auto q = quality_coeffs(constant, spiked);
  CHECK(q.q_f == 1.0);
  CHECK(q.q_t == 0.25);
  // scaling either vector leaves the coefficient unchanged
  const auto qs = quality_coeffs(7.0 * constant, 7.0 * spiked);
  CHECK(qs.q_f == q.q_f);
  CHECK(qs.q_t == q.q_t);

  CHECK_THROWS_WITH_AS(quality_coeffs(Eigen::VectorXd::Zero(3), spiked),
                       doctest::Contains("degenerate"), std::invalid_argument);
}

TEST_CASE("bsq harmonic mean") {
  CHECK(bsq(0.5, 0.5) == 0.5);
  CHECK(bsq(0.2, 0.6) == doctest::Approx(0.3).epsilon(1e-15));
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(0.01, 1.0);
    const double b = rng.uniform(0.01, 1.0);
    const double h = bsq(a, b);
    CHECK(h >= std::min(a, b) - 1e-15);
    CHECK(h <= std::max(a, b) + 1e-15);
    CHECK(h <= std::min(a, b) + std::abs(a - b) + 1e-15);
  }
}

TEST_CASE("bsq_grad: symmetry, zero upstream, finite differences") {
  const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(4, 6, 0.9);
  const Eigen::MatrixXd g = bsq_grad(constant, kCvEps, 1.0);
  // row + column additive structure on a constant input
  for (Eigen::Index t = 0; t < 4; ++t) {
    for (Eigen::Index f = 0; f < 6; ++f) {
      CHECK(g(t, f) - g(t, 0) - g(0, f) + g(0, 0) == doctest::Approx(0.0).scale(g.cwiseAbs().maxCoeff()));
    }
  }

  CHECK(bsq_grad(constant, kCvEps, 0.0).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(11);
  const Eigen::MatrixXd mag = random_positive(rng, 6, 9);
  const Eigen::MatrixXd grad = bsq_grad(mag, kCvEps, 1.0);
  double max_fd = 0.0;
  Eigen::MatrixXd fd(6, 9);
  for (Eigen::Index t = 0; t < 6; ++t) {
    for (Eigen::Index f = 0; f < 9; ++f) {
      fd(t, f) = oracle::central_diff(
          [&](double v) {
            Eigen::MatrixXd m = mag;
            m(t, f) = v;
            return bsq_of(m);
          },
          mag(t, f), 1e-6);
      max_fd = std::max(max_fd, std::abs(fd(t, f)));
    }
  }
  for (Eigen::Index i = 0; i < fd.size(); ++i) {
    CHECK(std::abs(grad(i) - fd(i)) <= 1e-4 * std::max({std::abs(fd(i)), std::abs(grad(i)), 1e-3 * max_fd}));
  }
}

TEST_CASE("renyi entropy examples") {
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(4, 8, 0.3);
  for (double alpha : {0.5, 2.0, 3.0}) {
    CHECK(renyi_entropy(uniform, alpha) == doctest::Approx(std::log2(32.0)).epsilon(1e-12));
  }
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(4, 8);
  delta(2, 3) = 5.0;
  CHECK(renyi_entropy(delta, 3.0) == doctest::Approx(0.0).scale(1.0));

  // Schur concavity direction: concentrated below spread-out
  Eigen::MatrixXd nearly_uniform = uniform;
  nearly_uniform(0, 0) = 0.35;
  CHECK(renyi_entropy(delta, 3.0) < renyi_entropy(nearly_uniform, 3.0));

  CHECK_THROWS_AS(renyi_entropy(Eigen::MatrixXd::Zero(3, 3), 3.0), std::invalid_argument);
  CHECK_THROWS_AS(renyi_entropy(uniform, 1.0), std::invalid_argument);
}

TEST_CASE("quality report bounds and scale invariance") {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    const Eigen::MatrixXd mag = random_positive(rng, 5, 8);
    const QualityReport r = quality_report(mag);
    CHECK(r.q_f > 0.0);
    CHECK(r.q_f <= 1.0);
    CHECK(r.q_t > 0.0);
    CHECK(r.q_t <= 1.0);
    CHECK(r.bsq >= std::min(r.q_f, r.q_t) - 1e-12);
    CHECK(r.bsq <= std::max(r.q_f, r.q_t) + 1e-12);

    const double k = rng.uniform(1e-3, 1e3);
    const QualityReport rs = quality_report(k * mag);
    CHECK(std::abs(rs.q_f - r.q_f) <= 1e-9);
    CHECK(std::abs(rs.q_t - r.q_t) <= 1e-9);
    CHECK(std::abs(rs.bsq - r.bsq) <= 1e-9);
    CHECK(std::abs(rs.renyi - r.renyi) <= 1e-9);
  }
}

TEST_CASE("uniform spectrogram scores exactly 1, delta scores lower") {
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(6, 10, 2.0);
  const QualityReport u = quality_report(uniform);
  CHECK(u.bsq == 1.0);
  CHECK(u.eps_guard_hits == 16);  // every row and column is constant

  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(6, 10);
  delta(3, 4) = 2.0;
  CHECK(quality_report(delta).bsq < 1.0);
}

}  // TEST_SUITE
