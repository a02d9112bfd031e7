#pragma once

#include <Eigen/Core>
#include <filesystem>

namespace tfa {

/// Zeroth-order modified Bessel function of the first kind, by power series,
/// summed to relative accuracy 1e-12. Even in x. Grows like e^|x|/sqrt(2*pi*|x|)
/// and overflows double for |x| > ~713.
double bessel_i0(double x);

/// First-order modified Bessel function of the first kind.
double bessel_i1(double x);

/// I1(x)/x, finite at 0 (value 1/2). Used by the window length gradient where
/// the plain quotient would be 0/0 at the window edge.
double bessel_i1_over_x(double x);

/// Kaiser window of `support` samples:
///   w[n] = I0(beta*sqrt(1-(1-2n/(N-1))^2)) / I0(beta),  n = 0..N-1.
/// Symmetric; endpoints 1/I0(beta); center sample exactly 1 for odd N.
Eigen::VectorXd kaiser_window(int support, double beta);

/// Learnable per-frame window lengths plus the fixed frame geometry.
struct WindowParams {
  Eigen::VectorXd lengths;  ///< one continuous length per frame, in (1, support]
  double beta = 8.0;        ///< Kaiser shape
  int support = 0;          ///< N, samples per frame
  int hop = 0;              ///< t, samples between frame starts

  /// All lengths initialized to the full support.
  static WindowParams full(Eigen::Index n_frames, int support, int hop, double beta);

  /// Projects lengths back into (1, support] (called after optimizer steps).
  void clamp_lengths();

  Eigen::Index n_frames() const { return lengths.size(); }
};

/// Lower clamp for window lengths; lengths live in (1, support].
inline constexpr double kMinWindowLength = 1.0 + 1e-6;

/// Intra-frame sample index matrix: n_frames rows, each (0, 1, ..., support-1).
struct ResampledTime {
  Eigen::MatrixXd values;
};

ResampledTime resampled_time(Eigen::Index n_frames, int support);

/// Per-frame gate that zeroes window positions beyond the learned length.
/// Hard mode (soft_width == 0): position j is kept iff index < length, so each
/// row keeps a prefix of ceil(length) samples, clamped to [1, support].
/// Soft mode: a raised-cosine ramp from 1 to 0 over [length - soft_width, length],
/// exactly 1 / 0 outside that band; the kept set is unchanged, only tapered.
struct MaskMatrix {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep;
  double soft_width = 0.0;
};

MaskMatrix mask_matrix(const ResampledTime& bt, const Eigen::VectorXd& lengths, double soft_width);

/// Gate value in [0,1] for intra-frame index b against a window length.
double mask_gate(double b, double length, double soft_width);

/// d(gate)/d(length); zero everywhere in hard mode.
double mask_gate_dlength(double b, double length, double soft_width);

/// Per-frame Kaiser windows evaluated on the kept prefix of each row:
///   W[i][j] = I0(beta*sqrt(max(0, 1-(1-2*j/(len_i-1))^2))) / I0(beta)
/// and exactly 0 on masked positions (the limit the mask construction targets).
/// The sqrt argument is clamped at 0, which affects at most the one kept sample
/// with j in (len_i-1, len_i). Soft mode multiplies by the gate. With all
/// lengths equal to the support this reproduces kaiser_window bit for bit.
Eigen::MatrixXd modulated_kaiser(const MaskMatrix& mask, const Eigen::VectorXd& lengths,
                                 const ResampledTime& bt, double beta);

/// dW[i][j] / d(length_i), analytic. Hard mode differentiates only the smooth
/// Kaiser part (the cut-off itself carries no gradient); soft mode adds the
/// gate's derivative by the product rule. Masked positions are 0. The clamped
/// sqrt region (j > len_i - 1) is treated as constant (subgradient 0).
Eigen::MatrixXd window_grad_wrt_length(const MaskMatrix& mask, const Eigen::VectorXd& lengths,
                                       const ResampledTime& bt, double beta);

/// dW[i][j] / d(beta); same masking/gating conventions as above.
Eigen::MatrixXd window_grad_wrt_beta(const MaskMatrix& mask, const Eigen::VectorXd& lengths,
                                     const ResampledTime& bt, double beta);

/// Length vectors persist as text: header "# beta=<float> support=<int>",
/// then one float per line. Hop is context the file does not carry.
void save_window_lengths(const WindowParams& params, const std::filesystem::path& path);

struct LoadedWindowLengths {
  Eigen::VectorXd lengths;
  double beta = 0.0;
  int support = 0;
};

LoadedWindowLengths load_window_lengths(const std::filesystem::path& path);

}  // namespace tfa
