#pragma once

#include <Eigen/Core>
#include <filesystem>

#include "tfa/signal.hpp"

namespace tfa {

enum class PadMode { Zero, None };

/// Frame-count rule. Paper keeps an extra "-1" in the numerator:
///   Paper:        n_T = floor(1 + (L' - N - 1) / t)
///   Conventional: n_T = floor((L' - N) / t) + 1
enum class FrameCountMode { Paper, Conventional };

/// Frame count for a (padded) signal length. May return values < 1 for short
/// signals; frame_signal turns that into an error or pads it away.
long frame_count(long padded_len, int support, int hop, FrameCountMode mode);

/// Smallest L' >= len that makes the frame-count division exact and the count
/// at least 1 (right-side zero padding).
long padded_length(long len, int support, int hop, FrameCountMode mode);

/// Row-sliced view of a signal. Row i, column j holds sample x[j + i*hop]
/// (0-based; this is the paper-style slice x_{1 + j + i*t} written 1-based).
struct FrameMatrix {
  Eigen::MatrixXd frames;  ///< n_T x N
  int hop = 0;
  int support = 0;
  long pad_len = 0;  ///< zeros appended on the right before slicing

  Eigen::Index n_frames() const { return frames.rows(); }
};

FrameMatrix frame_signal(const Signal& x, int support, int hop, PadMode pad,
                         FrameCountMode mode = FrameCountMode::Paper);

/// CSV export: n_T rows, N columns, '.' decimal separator.
void save_frame_matrix(const FrameMatrix& fm, const std::filesystem::path& path);

}  // namespace tfa
