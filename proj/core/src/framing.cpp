#include "tfa/framing.hpp"

#include <stdexcept>
#include <string>

#include "tfa/text_io.hpp"

namespace tfa {
namespace {

long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

long count_numerator(long padded_len, int support, FrameCountMode mode) {
  return mode == FrameCountMode::Paper ? padded_len - support - 1 : padded_len - support;
}

}  // namespace

long frame_count(long padded_len, int support, int hop, FrameCountMode mode) {
  if (support < 1 || hop < 1) throw std::invalid_argument("frame_count: support and hop must be >= 1");
  return 1 + floor_div(count_numerator(padded_len, support, mode), hop);
}

long padded_length(long len, int support, int hop, FrameCountMode mode) {
  const long min_len = mode == FrameCountMode::Paper ? support + 1 : support;
  long padded = std::max(len, min_len);
  const long rem = count_numerator(padded, support, mode) % hop;
  if (rem != 0) padded += hop - rem;
  return padded;
}

FrameMatrix frame_signal(const Signal& x, int support, int hop, PadMode pad, FrameCountMode mode) {
  if (support < 2) throw std::invalid_argument("frame_signal: support must be >= 2");
  if (hop < 1) throw std::invalid_argument("frame_signal: hop must be >= 1");
  if (x.samples.empty()) throw std::invalid_argument("frame_signal: empty signal");

  const long len = static_cast<long>(x.samples.size());
  const long padded = pad == PadMode::Zero ? padded_length(len, support, hop, mode) : len;
  const long n_frames = frame_count(padded, support, hop, mode);
  if (n_frames < 1) {
    throw std::invalid_argument("frame_signal: signal too short for even one frame (length " +
                                std::to_string(len) + ", support " + std::to_string(support) + ")");
  }

  FrameMatrix fm;
  fm.hop = hop;
  fm.support = support;
  fm.pad_len = padded - len;
  fm.frames.resize(n_frames, support);
  for (long i = 0; i < n_frames; ++i) {
    const long start = i * hop;
    for (int j = 0; j < support; ++j) {
      const long idx = start + j;
      fm.frames(i, j) = idx < len ? x.samples[static_cast<std::size_t>(idx)] : 0.0;
    }
  }
  return fm;
}

void save_frame_matrix(const FrameMatrix& fm, const std::filesystem::path& path) {
  write_matrix_csv(fm.frames, path);
}

}  // namespace tfa
