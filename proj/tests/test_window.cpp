#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tfa/rng.hpp"
#include "tfa/window.hpp"

using namespace tfa;

TEST_SUITE("window") {

TEST_CASE("bessel_i0 basics") {
  CHECK(bessel_i0(0.0) == 1.0);
  CHECK(bessel_i0(1.0) == doctest::Approx(1.266065877752008).epsilon(1e-13));
  CHECK(bessel_i0(1.0) == doctest::Approx(oracle::bessel_i0_series(1.0)).epsilon(1e-13));
  CHECK(bessel_i0(-2.7) == bessel_i0(2.7));
  for (double x : {0.3, 2.0, 8.6, 15.0, 30.0}) {
    CHECK(bessel_i0(x) == doctest::Approx(oracle::bessel_i0_series(x)).epsilon(1e-12));
  }
}

TEST_CASE("bessel_i1 matches dI0/dx") {
  for (double x : {0.2, 1.0, 3.3, 7.8}) {
    const double fd = oracle::central_diff([](double v) { return bessel_i0(v); }, x, 1e-6);
    CHECK(bessel_i1(x) == doctest::Approx(fd).epsilon(1e-8));
  }
  CHECK(bessel_i1_over_x(0.0) == 0.5);
}

TEST_CASE("kaiser_window shape") {
  const Eigen::VectorXd rect = kaiser_window(8, 0.0);
  CHECK(rect.minCoeff() == 1.0);
  CHECK(rect.maxCoeff() == 1.0);

  const Eigen::VectorXd w = kaiser_window(9, 8.6);
  CHECK(w(4) == 1.0);  // odd support: center sample exact
  CHECK(w(0) == doctest::Approx(1.0 / oracle::bessel_i0_series(8.6)).epsilon(1e-12));
  CHECK(w(8) == w(0));
  for (int n = 0; n < 9; ++n) CHECK(w(n) == w(8 - n));  // symmetric
}

TEST_CASE("resampled_time rows") {
  const ResampledTime bt = resampled_time(3, 5);
  REQUIRE(bt.values.rows() == 3);
  REQUIRE(bt.values.cols() == 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) CHECK(bt.values(i, j) == static_cast<double>(j));

  const ResampledTime small = resampled_time(1, 2);
  CHECK(small.values(0, 0) == 0.0);
  CHECK(small.values(0, 1) == 1.0);
}

TEST_CASE("mask_matrix kept prefixes") {
  const ResampledTime bt = resampled_time(3, 5);
  Eigen::VectorXd lengths(3);
  lengths << 5.0, 3.0, 1.0;
  const MaskMatrix mask = mask_matrix(bt, lengths, 0.0);
  const auto kept = [&](int row) {
    int count = 0;
    for (int j = 0; j < 5; ++j) count += mask.keep(row, j) ? 1 : 0;
    return count;
  };
  CHECK(kept(0) == 5);
  CHECK(kept(1) == 3);
  CHECK(kept(2) == 1);

  Eigen::VectorXd full = Eigen::VectorXd::Constant(3, 5.0);
  const MaskMatrix all = mask_matrix(bt, full, 0.0);
  CHECK(all.keep.all());
}

TEST_CASE("soft gate converges to the hard mask") {
  // Away from the vanishing transition band the gates agree.
  for (double b : {0.0, 1.0, 2.0, 4.0}) {
    const double hard = mask_gate(b, 3.5, 0.0);
    const double soft = mask_gate(b, 3.5, 1e-9);
    if (std::abs(b - 3.5) > 1e-6) CHECK(hard == soft);
  }
  // Gate is exactly 1 / 0 outside the band, decreasing inside.
  CHECK(mask_gate(1.0, 4.0, 2.0) == 1.0);
  CHECK(mask_gate(4.0, 4.0, 2.0) == 0.0);
  CHECK(mask_gate(3.0, 4.0, 2.0) == doctest::Approx(0.5));
}

TEST_CASE("modulated_kaiser reduces to the vanilla window") {
  const int n_frames = 4, support = 16;
  const double beta = 8.0;
  const ResampledTime bt = resampled_time(n_frames, support);
  const Eigen::VectorXd lengths = Eigen::VectorXd::Constant(n_frames, support);
  const MaskMatrix mask = mask_matrix(bt, lengths, 0.0);
  const Eigen::MatrixXd w = modulated_kaiser(mask, lengths, bt, beta);
  const Eigen::VectorXd vanilla = kaiser_window(support, beta);
  for (int i = 0; i < n_frames; ++i)
    for (int j = 0; j < support; ++j) CHECK(w(i, j) == vanilla(j));  // bitwise
}

TEST_CASE("modulated_kaiser masked rows") {
  const ResampledTime bt = resampled_time(3, 5);
  Eigen::VectorXd lengths(3);
  lengths << 5.0, 3.0, 1.0;
  const MaskMatrix mask = mask_matrix(bt, lengths, 0.0);

  SUBCASE("beta 0 gives rectangular prefixes") {
    const Eigen::MatrixXd w = modulated_kaiser(mask, lengths, bt, 0.0);
    Eigen::MatrixXd expected(3, 5);
    expected << 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0;
    CHECK((w - expected).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("length 1 keeps a single positive sample") {
    const Eigen::MatrixXd w = modulated_kaiser(mask, lengths, bt, 8.0);
    CHECK(w(2, 0) > 0.0);
    for (int j = 1; j < 5; ++j) CHECK(w(2, j) == 0.0);
  }
}

TEST_CASE("window values bounded and unimodal") {
  Rng rng(7);
  const int support = 32;
  const ResampledTime bt = resampled_time(6, support);
  Eigen::VectorXd lengths(6);
  for (int i = 0; i < 6; ++i) lengths(i) = rng.uniform(2.3, support - 0.7);
  const MaskMatrix mask = mask_matrix(bt, lengths, 0.0);
  const Eigen::MatrixXd w = modulated_kaiser(mask, lengths, bt, 6.5);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w.maxCoeff() <= 1.0);
  for (int i = 0; i < 6; ++i) {
    const int kept = static_cast<int>(std::ceil(lengths(i)));
    int nonzero = 0;
    for (int j = 0; j < support; ++j) nonzero += w(i, j) > 0.0 ? 1 : 0;
    CHECK(nonzero == kept);
    // nondecreasing then nonincreasing over the kept prefix
    int direction_changes = 0;
    for (int j = 2; j < kept; ++j) {
      const double prev = w(i, j - 1) - w(i, j - 2);
      const double cur = w(i, j) - w(i, j - 1);
      if (prev >= 0.0 && cur < 0.0) ++direction_changes;
      if (prev < 0.0 && cur > 1e-15) ++direction_changes;  // would be a second mode
    }
    CHECK(direction_changes <= 1);
  }
}

TEST_CASE("window_grad_wrt_length against finite differences") {
  Rng rng(11);
  const int support = 24;
  const int n_frames = 5;
  const ResampledTime bt = resampled_time(n_frames, support);
  const double beta = 7.0;
  const double soft_width = 2.0;

  Eigen::VectorXd lengths(n_frames);
  for (int i = 0; i < n_frames; ++i) {
    // keep the fractional part away from 0/1 so the finite difference never
    // crosses a mask boundary or the sqrt clamp kink
    lengths(i) = std::floor(rng.uniform(6.0, support - 3.0)) + rng.uniform(0.3, 0.7);
  }
  const MaskMatrix mask = mask_matrix(bt, lengths, soft_width);
  const Eigen::MatrixXd grad = window_grad_wrt_length(mask, lengths, bt, beta);

  double max_fd = 0.0;
  Eigen::MatrixXd fd = Eigen::MatrixXd::Zero(n_frames, support);
  for (int i = 0; i < n_frames; ++i) {
    const double h = 1e-4 * lengths(i);
    for (int j = 0; j < support; ++j) {
      fd(i, j) = oracle::central_diff(
          [&](double len) {
            Eigen::VectorXd l = lengths;
            l(i) = len;
            const MaskMatrix m = mask_matrix(bt, l, soft_width);
            return modulated_kaiser(m, l, bt, beta)(i, j);
          },
          lengths(i), h);
      max_fd = std::max(max_fd, std::abs(fd(i, j)));
    }
  }
  for (int i = 0; i < n_frames; ++i) {
    for (int j = 0; j < support; ++j) {
      if (!mask.keep(i, j)) {
        CHECK(grad(i, j) == 0.0);
        continue;
      }
      const double scale = std::max({std::abs(grad(i, j)), std::abs(fd(i, j)), 1e-6 * max_fd});
      CHECK(std::abs(grad(i, j) - fd(i, j)) <= 1e-5 * scale);
    }
  }
}

TEST_CASE("window gradient zero cases") {
  const ResampledTime bt = resampled_time(2, 8);
  Eigen::VectorXd lengths(2);
  lengths << 5.5, 3.5;

  SUBCASE("masked positions carry no gradient") {
    const MaskMatrix mask = mask_matrix(bt, lengths, 2.0);
    const Eigen::MatrixXd g = window_grad_wrt_length(mask, lengths, bt, 4.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 8; ++j)
        if (!mask.keep(i, j)) CHECK(g(i, j) == 0.0);
  }

  SUBCASE("rectangular window, hard mask: interior gradient is zero") {
    const MaskMatrix mask = mask_matrix(bt, lengths, 0.0);
    const Eigen::MatrixXd g = window_grad_wrt_length(mask, lengths, bt, 0.0);
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("window_grad_wrt_beta against finite differences") {
  const ResampledTime bt = resampled_time(3, 12);
  Eigen::VectorXd lengths(3);
  lengths << 12.0, 7.4, 4.6;
  const double beta = 5.0;
  const MaskMatrix mask = mask_matrix(bt, lengths, 2.0);
  const Eigen::MatrixXd g = window_grad_wrt_beta(mask, lengths, bt, beta);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 12; ++j) {
      const double fd = oracle::central_diff(
          [&](double b) { return modulated_kaiser(mask, lengths, bt, b)(i, j); }, beta, 1e-5);
      CHECK(g(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("length vectors round-trip through files") {
  WindowParams params = WindowParams::full(4, 32, 8, 9.2);
  params.lengths << 32.0, 17.25, 5.5, 2.125;
  const auto path = std::filesystem::temp_directory_path() / "tfa_test_lengths.txt";
  save_window_lengths(params, path);
  const LoadedWindowLengths loaded = load_window_lengths(path);
  CHECK(loaded.beta == params.beta);
  CHECK(loaded.support == params.support);
  REQUIRE(loaded.lengths.size() == 4);
  CHECK((loaded.lengths - params.lengths).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("clamp_lengths projects into (1, support]") {
  WindowParams params = WindowParams::full(3, 16, 4, 8.0);
  params.lengths << 0.2, 40.0, 9.0;
  params.clamp_lengths();
  CHECK(params.lengths(0) == kMinWindowLength);
  CHECK(params.lengths(1) == 16.0);
  CHECK(params.lengths(2) == 9.0);
}

}  // TEST_SUITE
