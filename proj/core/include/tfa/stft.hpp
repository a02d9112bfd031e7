#pragma once

#include <Eigen/Core>
#include <complex>
#include <filesystem>
#include <vector>

#include "tfa/framing.hpp"
#include "tfa/window.hpp"

namespace tfa {

/// One-sided complex spectrum per frame: F = floor(N/2) + 1 bins.
struct Spectrogram {
  Eigen::MatrixXcd coeffs;  ///< n_T x F
  int support = 0;
  int hop = 0;
  double sample_rate = 0.0;

  Eigen::Index n_frames() const { return coeffs.rows(); }
  Eigen::Index freq_bins() const { return coeffs.cols(); }
};

/// Elementwise modulus of the coefficients.
Eigen::MatrixXd magnitude(const Spectrogram& spec);

enum class DftAlgo { Direct, Radix2 };

/// Windowed one-sided DFT of every frame with a single shared window:
///   coeffs[i][f] = sum_n frames[i][n] * window[n] * exp(-j*2*pi*f*n/N).
/// Direct is the reference path (plain matrix product, transparent to
/// differentiate); Radix2 requires a power-of-two support and must agree with
/// Direct to 1e-9.
Spectrogram stft(const FrameMatrix& frames, const Eigen::VectorXd& window, double sample_rate,
                 DftAlgo algo = DftAlgo::Direct);

/// Differentiable-STFT baseline: one learnable length `theta` shared by all
/// frames, realized as the modulated Kaiser row broadcast over frames.
Spectrogram dstft_fixed(const FrameMatrix& frames, double theta, double beta, double sample_rate,
                        double soft_width = 0.0);

/// Modulated differentiable STFT: per-frame learnable lengths. With all
/// lengths equal to the support this reproduces stft() with the same Kaiser
/// window bit for bit (identical windows, identical summation order).
Spectrogram mdstft(const FrameMatrix& frames, const WindowParams& params, double soft_width,
                   double sample_rate);

/// Lower-level entry point: apply an explicit per-frame window matrix
/// (n_T x N) and run the direct one-sided DFT. All forward transforms above
/// funnel through this, which is what makes their reductions exact.
Spectrogram windowed_stft(const FrameMatrix& frames, const Eigen::MatrixXd& window_matrix,
                          double sample_rate);

/// Loss gradient delivered to the window parameters.
struct SpectrogramGrad {
  Eigen::VectorXd d_lengths;  ///< dL/d(length_i), one per frame
  double d_beta = 0.0;        ///< filled only when requested
};

/// Pulls an upstream dL/d|coeffs| back through magnitude, the DFT, and the
/// modulated window, to per-frame length gradients. Zero-magnitude cells get a
/// zero subgradient. Frames whose upstream row is zero produce zero gradient.
SpectrogramGrad mdstft_backward(const FrameMatrix& frames, const WindowParams& params,
                                double soft_width, const Eigen::MatrixXd& upstream_dmag,
                                bool with_beta = false);

/// Same, reusing an already computed forward transform.
SpectrogramGrad mdstft_backward(const FrameMatrix& frames, const WindowParams& params,
                                double soft_width, const Eigen::MatrixXd& upstream_dmag,
                                const Spectrogram& forward, bool with_beta = false);

/// dL/d(windowed frame matrix A), the shared inner step of the backward pass:
/// chain through |z| (eps-guarded at 0) and the linear DFT.
Eigen::MatrixXd dmag_to_dwindowed(const Spectrogram& forward, const Eigen::MatrixXd& upstream_dmag);

/// In-place iterative radix-2 FFT (size must be a power of two).
void fft_radix2(std::vector<std::complex<double>>& data);

/// Spectrogram CSV: magnitudes, n_T rows x F columns, with the sidecar header
/// "# n=<N> hop=<t> fs=<Hz>". `complex_pairs` writes re,im interleaved instead.
void save_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path,
                          bool complex_pairs = false);

/// Reads a magnitude CSV written by save_spectrogram_csv (header optional;
/// missing geometry fields default to zero).
struct LoadedSpectrogram {
  Eigen::MatrixXd mag;
  int support = 0;
  int hop = 0;
  double sample_rate = 0.0;
};

LoadedSpectrogram load_spectrogram_csv(const std::filesystem::path& path);

}  // namespace tfa
