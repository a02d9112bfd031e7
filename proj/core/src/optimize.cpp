#include "tfa/optimize.hpp"

#include <stdexcept>

#include "tfa/text_io.hpp"

namespace tfa {
namespace {

double bsq_of_mag(const Eigen::MatrixXd& mag, double eps) {
  const ColRowMeans means = col_row_means(mag);
  const ColRowStds stds = col_row_stds(mag, means);
  const QualityCoeffs q = quality_coeffs(balanced_cv(means.mu_f, stds.sigma_f, eps),
                                         balanced_cv(means.mu_t, stds.sigma_t, eps));
  return bsq(q.q_f, q.q_t);
}

}  // namespace

double hard_mask_bsq(const FrameMatrix& frames, const WindowParams& params, double eps) {
  return bsq_of_mag(magnitude(mdstft(frames, params, /*soft_width=*/0.0, 0.0)), eps);
}

WindowOptimizeResult optimize_window_bsq(const FrameMatrix& frames, const WindowParams& init,
                                         WindowOptimizeMode mode, int iterations, double lr,
                                         double soft_width, double eps) {
  if (iterations < 0) throw std::invalid_argument("optimize_window_bsq: iterations must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("optimize_window_bsq: lr must be positive");

  WindowOptimizeResult result;
  result.params = init;
  result.params.clamp_lengths();
  result.initial_bsq = hard_mask_bsq(frames, result.params, eps);
  result.bsq_trajectory.reserve(static_cast<std::size_t>(iterations));

  double current = result.initial_bsq;
  for (int it = 0; it < iterations; ++it) {
    // Soft-mask gradient of the BSQ loss with respect to the lengths.
    const Spectrogram spec = mdstft(frames, result.params, soft_width, 0.0);
    const Eigen::MatrixXd mag = magnitude(spec);
    const Eigen::MatrixXd upstream = bsq_grad(mag, eps, 1.0);
    Eigen::VectorXd grad =
        mdstft_backward(frames, result.params, soft_width, upstream, spec).d_lengths;
    if (!grad.allFinite()) {
      throw divergence_error("optimize_window_bsq: non-finite gradient");
    }
    if (mode == WindowOptimizeMode::SharedTheta) {
      grad.setConstant(grad.sum());  // one shared scalar: d(theta) = sum_i d(length_i)
    }

    double step = lr;
    WindowParams accepted = result.params;
    for (int halving = 0; halving < 60; ++halving) {
      WindowParams candidate = result.params;
      candidate.lengths -= step * grad;
      candidate.clamp_lengths();
      const double value = hard_mask_bsq(frames, candidate, eps);
      if (value <= current + 1e-6) {
        accepted = candidate;
        current = value;
        break;
      }
      step *= 0.5;  // on underflow the iterate stays put
    }
    result.params = accepted;
    result.bsq_trajectory.push_back(current);
  }
  return result;
}

}  // namespace tfa
