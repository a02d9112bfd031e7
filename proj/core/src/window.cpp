#include "tfa/window.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "tfa/text_io.hpp"

namespace tfa {
namespace {

constexpr double kPi = std::numbers::pi;

// Shared smooth part of every Kaiser evaluation in this module. `len_minus_1`
// is (window length - 1); b is the intra-frame index. b == 0 short-circuits the
// ratio so a one-sample window (len_minus_1 == 0) stays finite.
double kaiser_sample(double b, double len_minus_1, double beta, double inv_i0_beta) {
  const double q = (b == 0.0) ? 0.0 : 2.0 * b / len_minus_1;
  const double r = 1.0 - q;
  double arg = 1.0 - r * r;
  if (!(arg > 0.0)) arg = 0.0;
  return bessel_i0(beta * std::sqrt(arg)) * inv_i0_beta;
}

// d(kaiser_sample)/d(length) on the smooth (unclamped) region, 0 elsewhere.
double kaiser_sample_dlength(double b, double len_minus_1, double beta, double inv_i0_beta) {
  if (b == 0.0 || len_minus_1 <= 0.0) return 0.0;
  const double q = 2.0 * b / len_minus_1;
  const double r = 1.0 - q;
  const double arg = 1.0 - r * r;
  if (!(arg > 0.0)) return 0.0;  // clamped region: value held constant
  const double darg = -2.0 * r * (2.0 * b / (len_minus_1 * len_minus_1));
  // d/darg I0(beta*sqrt(arg)) = beta^2/2 * (I1(z)/z) with z = beta*sqrt(arg).
  const double z = beta * std::sqrt(arg);
  return 0.5 * beta * beta * bessel_i1_over_x(z) * darg * inv_i0_beta;
}

double kaiser_sample_dbeta(double b, double len_minus_1, double beta, double i0_beta) {
  const double q = (b == 0.0) ? 0.0 : 2.0 * b / len_minus_1;
  const double r = 1.0 - q;
  double arg = 1.0 - r * r;
  if (!(arg > 0.0)) arg = 0.0;
  const double s = std::sqrt(arg);
  const double z = beta * s;
  return (bessel_i1(z) * s * i0_beta - bessel_i0(z) * bessel_i1(beta)) / (i0_beta * i0_beta);
}

double clamp_length(double length, int support) {
  return std::clamp(length, 1.0, static_cast<double>(support));
}

}  // namespace

double bessel_i0(double x) {
  const double half = 0.5 * x;
  const double q = half * half;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 1000; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double bessel_i1(double x) { return x * bessel_i1_over_x(x); }

double bessel_i1_over_x(double x) {
  const double half = 0.5 * x;
  const double q = half * half;
  double term = 0.5;
  double sum = 0.5;
  for (int k = 1; k < 1000; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k + 1));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

Eigen::VectorXd kaiser_window(int support, double beta) {
  if (support < 2) throw std::invalid_argument("kaiser_window: support must be >= 2");
  if (beta < 0.0) throw std::invalid_argument("kaiser_window: beta must be >= 0");
  const double inv_i0 = 1.0 / bessel_i0(beta);
  Eigen::VectorXd w(support);
  for (int n = 0; n < support; ++n) {
    w(n) = kaiser_sample(static_cast<double>(n), static_cast<double>(support - 1), beta, inv_i0);
  }
  return w;
}

WindowParams WindowParams::full(Eigen::Index n_frames, int support, int hop, double beta) {
  WindowParams p;
  p.lengths = Eigen::VectorXd::Constant(n_frames, static_cast<double>(support));
  p.beta = beta;
  p.support = support;
  p.hop = hop;
  return p;
}

void WindowParams::clamp_lengths() {
  const double hi = static_cast<double>(support);
  for (Eigen::Index i = 0; i < lengths.size(); ++i) {
    lengths(i) = std::clamp(lengths(i), kMinWindowLength, hi);
  }
}

ResampledTime resampled_time(Eigen::Index n_frames, int support) {
  if (n_frames < 1) throw std::invalid_argument("resampled_time: need at least one frame");
  if (support < 2) throw std::invalid_argument("resampled_time: support must be >= 2");
  ResampledTime bt;
  bt.values.resize(n_frames, support);
  for (int j = 0; j < support; ++j) bt.values.col(j).setConstant(static_cast<double>(j));
  return bt;
}

double mask_gate(double b, double length, double soft_width) {
  if (soft_width <= 0.0) return b < length ? 1.0 : 0.0;
  if (b >= length) return 0.0;
  if (b <= length - soft_width) return 1.0;
  return 0.5 * (1.0 + std::cos(kPi * (b - length + soft_width) / soft_width));
}

double mask_gate_dlength(double b, double length, double soft_width) {
  if (soft_width <= 0.0) return 0.0;
  if (b >= length || b <= length - soft_width) return 0.0;
  return kPi / (2.0 * soft_width) * std::sin(kPi * (b - length + soft_width) / soft_width);
}

MaskMatrix mask_matrix(const ResampledTime& bt, const Eigen::VectorXd& lengths, double soft_width) {
  if (lengths.size() != bt.values.rows()) {
    throw std::invalid_argument("mask_matrix: one length per frame required");
  }
  if (soft_width < 0.0) throw std::invalid_argument("mask_matrix: soft_width must be >= 0");
  const int support = static_cast<int>(bt.values.cols());
  MaskMatrix mask;
  mask.soft_width = soft_width;
  mask.keep.resize(bt.values.rows(), bt.values.cols());
  for (Eigen::Index i = 0; i < bt.values.rows(); ++i) {
    const double lam = clamp_length(lengths(i), support);
    for (Eigen::Index j = 0; j < bt.values.cols(); ++j) {
      // Strict '<': a length of 1 keeps exactly one sample (index 0).
      mask.keep(i, j) = bt.values(i, j) < lam;
    }
  }
  return mask;
}

Eigen::MatrixXd modulated_kaiser(const MaskMatrix& mask, const Eigen::VectorXd& lengths,
                                 const ResampledTime& bt, double beta) {
  if (mask.keep.rows() != bt.values.rows() || mask.keep.cols() != bt.values.cols() ||
      lengths.size() != bt.values.rows()) {
    throw std::invalid_argument("modulated_kaiser: shape mismatch");
  }
  const int support = static_cast<int>(bt.values.cols());
  const double inv_i0 = 1.0 / bessel_i0(beta);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(bt.values.rows(), bt.values.cols());
  for (Eigen::Index i = 0; i < bt.values.rows(); ++i) {
    const double len = lengths(i);
    const double lam = clamp_length(len, support);
    for (Eigen::Index j = 0; j < bt.values.cols(); ++j) {
      if (!mask.keep(i, j)) continue;
      const double b = bt.values(i, j);
      double value = kaiser_sample(b, len - 1.0, beta, inv_i0);
      if (mask.soft_width > 0.0) value *= mask_gate(b, lam, mask.soft_width);
      w(i, j) = value;
    }
  }
  return w;
}

Eigen::MatrixXd window_grad_wrt_length(const MaskMatrix& mask, const Eigen::VectorXd& lengths,
                                       const ResampledTime& bt, double beta) {
  if (mask.keep.rows() != bt.values.rows() || lengths.size() != bt.values.rows()) {
    throw std::invalid_argument("window_grad_wrt_length: shape mismatch");
  }
  const int support = static_cast<int>(bt.values.cols());
  const double inv_i0 = 1.0 / bessel_i0(beta);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(bt.values.rows(), bt.values.cols());
  for (Eigen::Index i = 0; i < bt.values.rows(); ++i) {
    const double len = lengths(i);
    const double lam = clamp_length(len, support);
    // At the clamp boundaries the projected length is locally constant.
    const double dlam = (len > 1.0 && len < static_cast<double>(support)) ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < bt.values.cols(); ++j) {
      if (!mask.keep(i, j)) continue;
      const double b = bt.values(i, j);
      const double dsmooth = kaiser_sample_dlength(b, len - 1.0, beta, inv_i0);
      if (mask.soft_width > 0.0) {
        const double gate = mask_gate(b, lam, mask.soft_width);
        const double dgate = mask_gate_dlength(b, lam, mask.soft_width) * dlam;
        g(i, j) = dsmooth * gate + kaiser_sample(b, len - 1.0, beta, inv_i0) * dgate;
      } else {
        g(i, j) = dsmooth;
      }
    }
  }
  return g;
}

Eigen::MatrixXd window_grad_wrt_beta(const MaskMatrix& mask, const Eigen::VectorXd& lengths,
                                     const ResampledTime& bt, double beta) {
  const int support = static_cast<int>(bt.values.cols());
  const double i0_beta = bessel_i0(beta);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(bt.values.rows(), bt.values.cols());
  for (Eigen::Index i = 0; i < bt.values.rows(); ++i) {
    const double len = lengths(i);
    const double lam = clamp_length(len, support);
    for (Eigen::Index j = 0; j < bt.values.cols(); ++j) {
      if (!mask.keep(i, j)) continue;
      const double b = bt.values(i, j);
      double value = kaiser_sample_dbeta(b, len - 1.0, beta, i0_beta);
      if (mask.soft_width > 0.0) value *= mask_gate(b, lam, mask.soft_width);
      g(i, j) = value;
    }
  }
  return g;
}

void save_window_lengths(const WindowParams& params, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "# beta=" << format_double(params.beta) << " support=" << params.support << '\n';
  for (Eigen::Index i = 0; i < params.lengths.size(); ++i) {
    os << format_double(params.lengths(i)) << '\n';
  }
  write_text_file(path, os.str());
}

LoadedWindowLengths load_window_lengths(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw io_error(path.string() + ": empty file");
  LoadedWindowLengths out;
  std::size_t beta_pos = line.find("beta=");
  std::size_t supp_pos = line.find("support=");
  if (line.empty() || line[0] != '#' || beta_pos == std::string::npos ||
      supp_pos == std::string::npos) {
    throw io_error(path.string() + ": malformed header, expected '# beta=<float> support=<int>'");
  }
  out.beta = parse_double(line.substr(beta_pos + 5, line.find(' ', beta_pos) - beta_pos - 5),
                          path.string() + " header beta");
  out.support = static_cast<int>(
      parse_double(line.substr(supp_pos + 8), path.string() + " header support"));
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    values.push_back(parse_double(line, path.string() + " line " + std::to_string(lineno)));
  }
  if (values.empty()) throw io_error(path.string() + ": no length values");
  out.lengths = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

}  // namespace tfa
