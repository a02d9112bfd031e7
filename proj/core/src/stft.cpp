#include "tfa/stft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "tfa/text_io.hpp"

namespace tfa {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Real one-sided DFT basis for a given support: cos/sin of 2*pi*f*n/N with the
// angle reduced mod N before evaluation so large f*n products stay accurate.
struct DftBasis {
  Eigen::MatrixXd cos_nf;  // N x F
  Eigen::MatrixXd sin_nf;  // N x F
};

const DftBasis& dft_basis(int support) {
  static std::mutex mu;
  static std::map<int, DftBasis> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(support);
  if (it != cache.end()) return it->second;
  const int bins = support / 2 + 1;
  DftBasis basis;
  basis.cos_nf.resize(support, bins);
  basis.sin_nf.resize(support, bins);
  for (int n = 0; n < support; ++n) {
    for (int f = 0; f < bins; ++f) {
      const double angle = kTwoPi * static_cast<double>((n * f) % support) / support;
      basis.cos_nf(n, f) = std::cos(angle);
      basis.sin_nf(n, f) = std::sin(angle);
    }
  }
  return cache.emplace(support, std::move(basis)).first->second;
}

Spectrogram windowed_dft(const Eigen::MatrixXd& windowed, int support, int hop, double fs) {
  const DftBasis& basis = dft_basis(support);
  Spectrogram spec;
  spec.support = support;
  spec.hop = hop;
  spec.sample_rate = fs;
  const Eigen::MatrixXd re = windowed * basis.cos_nf;
  const Eigen::MatrixXd im = -(windowed * basis.sin_nf);
  spec.coeffs.resize(windowed.rows(), re.cols());
  spec.coeffs.real() = re;
  spec.coeffs.imag() = im;
  return spec;
}

}  // namespace

Eigen::MatrixXd magnitude(const Spectrogram& spec) { return spec.coeffs.cwiseAbs(); }

Spectrogram stft(const FrameMatrix& frames, const Eigen::VectorXd& window, double sample_rate,
                 DftAlgo algo) {
  if (window.size() != frames.support) {
    throw std::invalid_argument("stft: window length must equal the frame support");
  }
  const Eigen::MatrixXd windowed =
      frames.frames.array().rowwise() * window.transpose().array();
  if (algo == DftAlgo::Direct) {
    return windowed_dft(windowed, frames.support, frames.hop, sample_rate);
  }

  const int n = frames.support;
  if ((n & (n - 1)) != 0) {
    throw std::invalid_argument("stft: radix-2 path needs a power-of-two support");
  }
  Spectrogram spec;
  spec.support = n;
  spec.hop = frames.hop;
  spec.sample_rate = sample_rate;
  spec.coeffs.resize(frames.n_frames(), n / 2 + 1);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < frames.n_frames(); ++i) {
    for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(j)] = windowed(i, j);
    fft_radix2(buf);
    for (int f = 0; f <= n / 2; ++f) spec.coeffs(i, f) = buf[static_cast<std::size_t>(f)];
  }
  return spec;
}

Spectrogram dstft_fixed(const FrameMatrix& frames, double theta, double beta, double sample_rate,
                        double soft_width) {
  if (!(theta > 1.0) || theta > static_cast<double>(frames.support)) {
    throw std::invalid_argument("dstft_fixed: theta must lie in (1, support]");
  }
  WindowParams params = WindowParams::full(frames.n_frames(), frames.support, frames.hop, beta);
  params.lengths.setConstant(theta);
  return mdstft(frames, params, soft_width, sample_rate);
}

Spectrogram mdstft(const FrameMatrix& frames, const WindowParams& params, double soft_width,
                   double sample_rate) {
  if (params.lengths.size() != frames.n_frames()) {
    throw std::invalid_argument("mdstft: one window length per frame required");
  }
  if (params.support != frames.support) {
    throw std::invalid_argument("mdstft: window support does not match frame support");
  }
  const ResampledTime bt = resampled_time(frames.n_frames(), frames.support);
  const MaskMatrix mask = mask_matrix(bt, params.lengths, soft_width);
  const Eigen::MatrixXd w = modulated_kaiser(mask, params.lengths, bt, params.beta);
  return windowed_stft(frames, w, sample_rate);
}

Spectrogram windowed_stft(const FrameMatrix& frames, const Eigen::MatrixXd& window_matrix,
                          double sample_rate) {
  if (window_matrix.rows() != frames.n_frames() || window_matrix.cols() != frames.support) {
    throw std::invalid_argument("windowed_stft: window matrix shape mismatch");
  }
  return windowed_dft(frames.frames.cwiseProduct(window_matrix), frames.support, frames.hop,
                      sample_rate);
}

Eigen::MatrixXd dmag_to_dwindowed(const Spectrogram& forward, const Eigen::MatrixXd& upstream_dmag) {
  if (upstream_dmag.rows() != forward.coeffs.rows() ||
      upstream_dmag.cols() != forward.coeffs.cols()) {
    throw std::invalid_argument("dmag_to_dwindowed: upstream shape mismatch");
  }
  const Eigen::Index rows = forward.coeffs.rows();
  const Eigen::Index cols = forward.coeffs.cols();
  Eigen::MatrixXd d_re(rows, cols), d_im(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index f = 0; f < cols; ++f) {
      const std::complex<double> z = forward.coeffs(i, f);
      const double mag = std::abs(z);
      if (mag > 0.0) {
        const double u = upstream_dmag(i, f) / mag;
        d_re(i, f) = u * z.real();
        d_im(i, f) = u * z.imag();
      } else {
        d_re(i, f) = 0.0;  // subgradient at |z| = 0
        d_im(i, f) = 0.0;
      }
    }
  }
  const DftBasis& basis = dft_basis(forward.support);
  // Re = A*C, Im = -(A*S)  =>  dA = dRe*C^T - dIm*S^T.
  return d_re * basis.cos_nf.transpose() - d_im * basis.sin_nf.transpose();
}

SpectrogramGrad mdstft_backward(const FrameMatrix& frames, const WindowParams& params,
                                double soft_width, const Eigen::MatrixXd& upstream_dmag,
                                const Spectrogram& forward, bool with_beta) {
  const Eigen::MatrixXd d_windowed = dmag_to_dwindowed(forward, upstream_dmag);
  const Eigen::MatrixXd d_window = d_windowed.cwiseProduct(frames.frames);

  const ResampledTime bt = resampled_time(frames.n_frames(), frames.support);
  const MaskMatrix mask = mask_matrix(bt, params.lengths, soft_width);
  const Eigen::MatrixXd w_dlen = window_grad_wrt_length(mask, params.lengths, bt, params.beta);

  SpectrogramGrad grad;
  grad.d_lengths = d_window.cwiseProduct(w_dlen).rowwise().sum();
  if (with_beta) {
    const Eigen::MatrixXd w_dbeta = window_grad_wrt_beta(mask, params.lengths, bt, params.beta);
    grad.d_beta = d_window.cwiseProduct(w_dbeta).sum();
  }
  return grad;
}

SpectrogramGrad mdstft_backward(const FrameMatrix& frames, const WindowParams& params,
                                double soft_width, const Eigen::MatrixXd& upstream_dmag,
                                bool with_beta) {
  // The sample rate is metadata only; the gradient does not depend on it.
  const Spectrogram forward = mdstft(frames, params, soft_width, 0.0);
  return mdstft_backward(frames, params, soft_width, upstream_dmag, forward, with_beta);
}

void fft_radix2(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("fft_radix2: size must be a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -kTwoPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

void save_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path,
                          bool complex_pairs) {
  std::vector<std::string> header{"# n=" + std::to_string(spec.support) +
                                  " hop=" + std::to_string(spec.hop) +
                                  " fs=" + format_double(spec.sample_rate)};
  if (!complex_pairs) {
    write_matrix_csv(magnitude(spec), path, header);
    return;
  }
  Eigen::MatrixXd interleaved(spec.coeffs.rows(), 2 * spec.coeffs.cols());
  for (Eigen::Index i = 0; i < spec.coeffs.rows(); ++i) {
    for (Eigen::Index f = 0; f < spec.coeffs.cols(); ++f) {
      interleaved(i, 2 * f) = spec.coeffs(i, f).real();
      interleaved(i, 2 * f + 1) = spec.coeffs(i, f).imag();
    }
  }
  write_matrix_csv(interleaved, path, header);
}

LoadedSpectrogram load_spectrogram_csv(const std::filesystem::path& path) {
  std::vector<std::string> headers;
  LoadedSpectrogram out;
  out.mag = read_matrix_csv(path, &headers);
  for (const auto& h : headers) {
    std::istringstream is(h);
    std::string tok;
    while (is >> tok) {
      if (tok.rfind("n=", 0) == 0) out.support = std::stoi(tok.substr(2));
      if (tok.rfind("hop=", 0) == 0) out.hop = std::stoi(tok.substr(4));
      if (tok.rfind("fs=", 0) == 0) out.sample_rate = parse_double(tok.substr(3), path.string() + " fs");
    }
  }
  return out;
}

}  // namespace tfa
