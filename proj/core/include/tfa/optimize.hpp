#pragma once

#include <vector>

#include "tfa/metrics.hpp"
#include "tfa/stft.hpp"

namespace tfa {

/// Whether every frame owns its length (modulated transform) or all frames
/// share one scalar length (the fixed differentiable-window baseline).
enum class WindowOptimizeMode { PerFrame, SharedTheta };

struct WindowOptimizeResult {
  WindowParams params;                 ///< final window lengths
  double initial_bsq = 0.0;            ///< hard-mask BSQ before any step
  std::vector<double> bsq_trajectory;  ///< hard-mask BSQ after each iteration
};

/// Gradient descent on the BSQ loss alone. Gradients use the soft mask
/// (differentiable); progress is measured with the hard mask. Each iteration
/// halves the step until the hard-mask BSQ does not increase by more than
/// 1e-6; when the step underflows the iterate stays put, so the recorded
/// trajectory is nonincreasing up to that tolerance.
WindowOptimizeResult optimize_window_bsq(const FrameMatrix& frames, const WindowParams& init,
                                         WindowOptimizeMode mode, int iterations, double lr,
                                         double soft_width, double eps = kCvEps);

/// Hard-mask BSQ of the modulated transform with the given lengths.
double hard_mask_bsq(const FrameMatrix& frames, const WindowParams& params, double eps = kCvEps);

}  // namespace tfa
