#include "tfa/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tfa/framing.hpp"
#include "tfa/text_io.hpp"

namespace tfa {
namespace {

// Flat parameter layout: [w1 | b1 | w2 | b2], matrices column-major.
struct ParamLayout {
  Eigen::Index w1_off, b1_off, w2_off, b2_off, total;
};

ParamLayout layout(int input, int hidden, int classes) {
  ParamLayout l{};
  l.w1_off = 0;
  l.b1_off = l.w1_off + static_cast<Eigen::Index>(hidden) * input;
  l.w2_off = l.b1_off + hidden;
  l.b2_off = l.w2_off + static_cast<Eigen::Index>(classes) * hidden;
  l.total = l.b2_off + classes;
  return l;
}

Eigen::Index manual_argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace

TinyClassifier TinyClassifier::make(int pool_rows, int pool_cols, int hidden, int n_classes,
                                    Rng& rng) {
  if (pool_rows < 1 || pool_cols < 1 || hidden < 1 || n_classes < 2) {
    throw std::invalid_argument("TinyClassifier: invalid dimensions");
  }
  TinyClassifier net;
  net.pool_rows = pool_rows;
  net.pool_cols = pool_cols;
  net.hidden = hidden;
  net.n_classes = n_classes;
  const ParamLayout l = layout(net.input_dim(), hidden, n_classes);
  net.params = Eigen::VectorXd::Zero(l.total);
  // He-normal weights, zero biases.
  const double s1 = std::sqrt(2.0 / net.input_dim());
  for (Eigen::Index i = l.w1_off; i < l.b1_off; ++i) net.params(i) = s1 * rng.gaussian();
  const double s2 = std::sqrt(2.0 / hidden);
  for (Eigen::Index i = l.w2_off; i < l.b2_off; ++i) net.params(i) = s2 * rng.gaussian();
  return net;
}

Eigen::Map<const Eigen::MatrixXd> TinyClassifier::w1() const {
  const ParamLayout l = layout(input_dim(), hidden, n_classes);
  return {params.data() + l.w1_off, hidden, input_dim()};
}
Eigen::Map<const Eigen::VectorXd> TinyClassifier::b1() const {
  const ParamLayout l = layout(input_dim(), hidden, n_classes);
  return {params.data() + l.b1_off, hidden};
}
Eigen::Map<const Eigen::MatrixXd> TinyClassifier::w2() const {
  const ParamLayout l = layout(input_dim(), hidden, n_classes);
  return {params.data() + l.w2_off, n_classes, hidden};
}
Eigen::Map<const Eigen::VectorXd> TinyClassifier::b2() const {
  const ParamLayout l = layout(input_dim(), hidden, n_classes);
  return {params.data() + l.b2_off, n_classes};
}

TinyClassifier::Activations TinyClassifier::forward(const Eigen::VectorXd& pooled_flat) const {
  if (pooled_flat.size() != input_dim()) {
    throw std::invalid_argument("TinyClassifier::forward: input size mismatch");
  }
  Activations a;
  a.x = pooled_flat;
  a.hidden = (w1() * a.x + b1()).cwiseMax(0.0);
  a.logits = w2() * a.hidden + b2();
  a.probs = softmax(a.logits);
  return a;
}

Eigen::MatrixXd average_pool(const Eigen::MatrixXd& in, int out_rows, int out_cols) {
  if (in.rows() < out_rows || in.cols() < out_cols) {
    throw std::invalid_argument("average_pool: input smaller than pooling grid");
  }
  Eigen::MatrixXd out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r) {
    const Eigen::Index r0 = in.rows() * r / out_rows;
    const Eigen::Index r1 = in.rows() * (r + 1) / out_rows;
    for (int c = 0; c < out_cols; ++c) {
      const Eigen::Index c0 = in.cols() * c / out_cols;
      const Eigen::Index c1 = in.cols() * (c + 1) / out_cols;
      out(r, c) = in.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

Eigen::MatrixXd average_pool_backward(const Eigen::MatrixXd& d_pooled, Eigen::Index in_rows,
                                      Eigen::Index in_cols) {
  const auto out_rows = static_cast<int>(d_pooled.rows());
  const auto out_cols = static_cast<int>(d_pooled.cols());
  Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(in_rows, in_cols);
  for (int r = 0; r < out_rows; ++r) {
    const Eigen::Index r0 = in_rows * r / out_rows;
    const Eigen::Index r1 = in_rows * (r + 1) / out_rows;
    for (int c = 0; c < out_cols; ++c) {
      const Eigen::Index c0 = in_cols * c / out_cols;
      const Eigen::Index c1 = in_cols * (c + 1) / out_cols;
      const double share = d_pooled(r, c) / static_cast<double>((r1 - r0) * (c1 - c0));
      d_in.block(r0, c0, r1 - r0, c1 - c0).array() += share;
    }
  }
  return d_in;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
  const Eigen::VectorXd e = shifted.array().exp();
  return e / e.sum();
}

double smoothed_cross_entropy(const Eigen::VectorXd& logits, int label, double smoothing) {
  const auto k = logits.size();
  if (label < 0 || label >= k) throw std::invalid_argument("smoothed_cross_entropy: bad class id");
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw std::invalid_argument("smoothed_cross_entropy: smoothing must be in [0, 1)");
  }
  const double max = logits.maxCoeff();
  const double lse = max + std::log((logits.array() - max).exp().sum());
  const double off = k > 1 ? smoothing / static_cast<double>(k - 1) : 0.0;
  double loss = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double q = j == label ? 1.0 - smoothing : off;
    if (q > 0.0) loss -= q * (logits(j) - lse);
  }
  return loss;
}

Eigen::VectorXd smoothed_cross_entropy_grad(const Eigen::VectorXd& logits, int label,
                                            double smoothing) {
  const auto k = logits.size();
  if (label < 0 || label >= k) throw std::invalid_argument("smoothed_cross_entropy: bad class id");
  Eigen::VectorXd grad = softmax(logits);
  const double off = k > 1 ? smoothing / static_cast<double>(k - 1) : 0.0;
  for (Eigen::Index j = 0; j < k; ++j) grad(j) -= j == label ? 1.0 - smoothing : off;
  return grad;
}

KernelBandwidths median_heuristic_bandwidths(const Eigen::MatrixXd& x_src,
                                             const Eigen::MatrixXd& x_tgt) {
  if (x_src.cols() != x_tgt.cols()) {
    throw std::invalid_argument("median_heuristic_bandwidths: feature dims differ");
  }
  Eigen::MatrixXd all(x_src.rows() + x_tgt.rows(), x_src.cols());
  all << x_src, x_tgt;
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(all.rows()) * (all.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < all.rows(); ++j) {
      d2.push_back((all.row(i) - all.row(j)).squaredNorm());
    }
  }
  double median = 1.0;
  if (!d2.empty()) {
    const auto mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
    median = d2[mid];
  }
  if (!(median > 0.0)) median = 1.0;
  KernelBandwidths bw;
  bw.feature = {0.25 * median, 0.5 * median, median, 2.0 * median, 4.0 * median};
  bw.output = 1.0;
  return bw;
}

namespace {

double kernel_k1(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                 const std::vector<double>& bws) {
  const double d2 = (a - b).squaredNorm();
  double k = 0.0;
  for (double bw : bws) k += std::exp(-d2 / bw);
  return k;
}

double kernel_k2(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double bw) {
  return std::exp(-(a - b).squaredNorm() / bw);
}

void check_domain_batches(const Eigen::MatrixXd& x_src, const Eigen::MatrixXd& z_src,
                          const Eigen::MatrixXd& x_tgt, const Eigen::MatrixXd& z_tgt) {
  if (x_src.rows() != x_tgt.rows()) {
    throw std::invalid_argument("domain_metric: source/target batch sizes differ");
  }
  if (x_src.rows() != z_src.rows() || x_tgt.rows() != z_tgt.rows()) {
    throw std::invalid_argument("domain_metric: feature/output row counts differ");
  }
  if (x_src.cols() != x_tgt.cols() || z_src.cols() != z_tgt.cols()) {
    throw std::invalid_argument("domain_metric: dimension mismatch between domains");
  }
  if (x_src.rows() < 1) throw std::invalid_argument("domain_metric: empty batch");
}

}  // namespace

double domain_metric(const Eigen::MatrixXd& x_src, const Eigen::MatrixXd& z_src,
                     const Eigen::MatrixXd& x_tgt, const Eigen::MatrixXd& z_tgt,
                     const KernelBandwidths& bw) {
  check_domain_batches(x_src, z_src, x_tgt, z_tgt);
  const Eigen::Index n = x_src.rows();
  double ss = 0.0, tt = 0.0, st = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      ss += kernel_k1(x_src.row(i), x_src.row(j), bw.feature) *
            kernel_k2(z_src.row(i), z_src.row(j), bw.output);
      tt += kernel_k1(x_tgt.row(i), x_tgt.row(j), bw.feature) *
            kernel_k2(z_tgt.row(i), z_tgt.row(j), bw.output);
      st += kernel_k1(x_src.row(i), x_tgt.row(j), bw.feature) *
            kernel_k2(z_src.row(i), z_tgt.row(j), bw.output);
    }
  }
  const double inv = 1.0 / static_cast<double>(n * n);
  return inv * ss + inv * tt - 2.0 * inv * st;
}

DomainMetricGrad domain_metric_backward(const Eigen::MatrixXd& x_src, const Eigen::MatrixXd& z_src,
                                        const Eigen::MatrixXd& x_tgt, const Eigen::MatrixXd& z_tgt,
                                        const KernelBandwidths& bw, double upstream) {
  check_domain_batches(x_src, z_src, x_tgt, z_tgt);
  const Eigen::Index n = x_src.rows();
  DomainMetricGrad g;
  g.d_x_src = Eigen::MatrixXd::Zero(n, x_src.cols());
  g.d_z_src = Eigen::MatrixXd::Zero(n, z_src.cols());
  g.d_x_tgt = Eigen::MatrixXd::Zero(n, x_tgt.cols());
  g.d_z_tgt = Eigen::MatrixXd::Zero(n, z_tgt.cols());
  const double inv = upstream / static_cast<double>(n * n);

  // d/d(a) of k1(a,b)*k2(za,zb): the Gaussian factors pull in -2(a-b)/bw each.
  auto add_pair = [&bw](double coeff, const Eigen::RowVectorXd& xa, const Eigen::RowVectorXd& xb,
                        const Eigen::RowVectorXd& za, const Eigen::RowVectorXd& zb,
                        Eigen::MatrixXd& d_xa, Eigen::MatrixXd& d_za, Eigen::Index row) {
    const double d2x = (xa - xb).squaredNorm();
    const double k2v = kernel_k2(za, zb, bw.output);
    double k1v = 0.0;
    Eigen::RowVectorXd dk1 = Eigen::RowVectorXd::Zero(xa.size());
    for (double b : bw.feature) {
      const double e = std::exp(-d2x / b);
      k1v += e;
      dk1 += e * (-2.0 / b) * (xa - xb);
    }
    d_xa.row(row) += coeff * k2v * dk1;
    d_za.row(row) += coeff * k1v * k2v * (-2.0 / bw.output) * (za - zb);
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      // Within-domain terms: every ordered pair visits its first argument, so
      // the symmetric dependence on the second argument is covered by (j, i).
      add_pair(inv, x_src.row(i), x_src.row(j), z_src.row(i), z_src.row(j), g.d_x_src, g.d_z_src, i);
      add_pair(inv, x_tgt.row(i), x_tgt.row(j), z_tgt.row(i), z_tgt.row(j), g.d_x_tgt, g.d_z_tgt, i);
      // Cross term touches one row in each domain.
      add_pair(-2.0 * inv, x_src.row(i), x_tgt.row(j), z_src.row(i), z_tgt.row(j), g.d_x_src,
               g.d_z_src, i);
      add_pair(-2.0 * inv, x_tgt.row(j), x_src.row(i), z_tgt.row(j), z_src.row(i), g.d_x_tgt,
               g.d_z_tgt, j);
    }
  }
  return g;
}

double lambda0(int epoch, int max_epoch) {
  if (epoch < 0 || max_epoch < 1 || epoch > max_epoch) {
    throw std::invalid_argument("lambda0: need 0 <= epoch <= max_epoch");
  }
  const double ratio = static_cast<double>(epoch) / static_cast<double>(max_epoch);
  return -4.0 / (std::sqrt(ratio) + 1.0) + 4.0;
}

double total_loss(double l_cl, double l_m, double l_sbsq, double l_tbsq, int epoch,
                  const TrainConfig& cfg) {
  const double l0 = cfg.lambda0_off ? 0.0 : lambda0(epoch, cfg.max_epoch);
  return l_cl + l0 * l_m + cfg.lambda1 * l_sbsq + cfg.lambda2 * l_tbsq;
}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size()) throw std::invalid_argument("AdamW: gradient size mismatch");
  if (!grad.allFinite()) {
    throw divergence_error("AdamW: non-finite gradient (NaN or overflow in the backward pass)");
  }
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
  }
  ++steps;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  const Eigen::VectorXd m_hat = m / bc1;
  const Eigen::VectorXd v_hat = v / bc2;
  params -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
  if (weight_decay > 0.0) params -= lr * weight_decay * params;
}

void optimizer_step(TrainState& state, const Grads& grads, const TrainConfig& cfg) {
  state.opt_net.step(state.net.params, grads.net);
  state.opt_win_src.step(state.win_src.lengths, grads.win_src);
  state.opt_win_tgt.step(state.win_tgt.lengths, grads.win_tgt);
  state.win_src.clamp_lengths();
  state.win_tgt.clamp_lengths();
  if (cfg.learn_beta) {
    // Beta shares the window learning rate; plain step, floored at zero.
    state.win_src.beta = std::max(0.0, state.win_src.beta - cfg.lr_window * grads.beta_src);
    state.win_tgt.beta = std::max(0.0, state.win_tgt.beta - cfg.lr_window * grads.beta_tgt);
  }
}

namespace {

struct DomainForward {
  std::vector<FrameMatrix> frames;
  std::vector<Spectrogram> specs;
  std::vector<Eigen::MatrixXd> mags;
  Eigen::MatrixXd features;  // batch x (pool_rows*pool_cols)
  Eigen::MatrixXd hidden;    // batch x hidden
  Eigen::MatrixXd logits;    // batch x classes
  Eigen::MatrixXd probs;     // batch x classes
  double bsq_mean = 0.0;
};

Eigen::VectorXd flatten_rowmajor(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v(k++) = m(r, c);
  return v;
}

Eigen::MatrixXd unflatten_rowmajor(const Eigen::VectorXd& v, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v(k++);
  return m;
}

DomainForward forward_domain(const TrainState& state, const Dataset& data,
                             const std::vector<std::size_t>& idx, const WindowParams& win,
                             const Eigen::MatrixXd& window_matrix, const TrainConfig& cfg) {
  DomainForward fwd;
  const auto n = idx.size();
  fwd.frames.reserve(n);
  fwd.specs.reserve(n);
  fwd.mags.reserve(n);
  fwd.features.resize(static_cast<Eigen::Index>(n), state.net.input_dim());
  fwd.hidden.resize(static_cast<Eigen::Index>(n), state.net.hidden);
  fwd.logits.resize(static_cast<Eigen::Index>(n), state.net.n_classes);
  fwd.probs.resize(static_cast<Eigen::Index>(n), state.net.n_classes);
  double bsq_sum = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const Signal& sig = data.signals[idx[b]];
    FrameMatrix fm = frame_signal(sig, cfg.support, cfg.hop, PadMode::Zero);
    if (fm.n_frames() != win.n_frames()) {
      throw std::invalid_argument("train: frame count differs across samples");
    }
    Spectrogram spec = windowed_stft(fm, window_matrix, sig.sample_rate);
    Eigen::MatrixXd mag = magnitude(spec);
    const Eigen::MatrixXd pooled = average_pool(mag, state.net.pool_rows, state.net.pool_cols);
    const auto act = state.net.forward(flatten_rowmajor(pooled));
    fwd.features.row(static_cast<Eigen::Index>(b)) = act.x.transpose();
    fwd.hidden.row(static_cast<Eigen::Index>(b)) = act.hidden.transpose();
    fwd.logits.row(static_cast<Eigen::Index>(b)) = act.logits.transpose();
    fwd.probs.row(static_cast<Eigen::Index>(b)) = act.probs.transpose();

    const ColRowMeans means = col_row_means(mag);
    const ColRowStds stds = col_row_stds(mag, means);
    const QualityCoeffs q = quality_coeffs(balanced_cv(means.mu_f, stds.sigma_f, cfg.cv_eps),
                                           balanced_cv(means.mu_t, stds.sigma_t, cfg.cv_eps));
    bsq_sum += bsq(q.q_f, q.q_t);

    fwd.frames.push_back(std::move(fm));
    fwd.specs.push_back(std::move(spec));
    fwd.mags.push_back(std::move(mag));
  }
  fwd.bsq_mean = bsq_sum / static_cast<double>(n);
  return fwd;
}

// Backpropagates per-sample logit/probability/feature gradients through the
// classifier into flat network-parameter grads, returning dL/d(features).
Eigen::MatrixXd backward_classifier(const TinyClassifier& net, const DomainForward& fwd,
                                    const Eigen::MatrixXd& d_logits,
                                    const Eigen::MatrixXd& d_feat_direct, Eigen::VectorXd& d_net) {
  const ParamLayout l = layout(net.input_dim(), net.hidden, net.n_classes);
  Eigen::Map<Eigen::MatrixXd> d_w1(d_net.data() + l.w1_off, net.hidden, net.input_dim());
  Eigen::Map<Eigen::VectorXd> d_b1(d_net.data() + l.b1_off, net.hidden);
  Eigen::Map<Eigen::MatrixXd> d_w2(d_net.data() + l.w2_off, net.n_classes, net.hidden);
  Eigen::Map<Eigen::VectorXd> d_b2(d_net.data() + l.b2_off, net.n_classes);

  Eigen::MatrixXd d_hidden = d_logits * net.w2();              // batch x hidden
  d_hidden.array() *= (fwd.hidden.array() > 0.0).cast<double>();

  d_w2 += d_logits.transpose() * fwd.hidden;
  d_b2 += d_logits.colwise().sum().transpose();
  d_w1 += d_hidden.transpose() * fwd.features;
  d_b1 += d_hidden.colwise().sum().transpose();

  return d_hidden * net.w1() + d_feat_direct;  // batch x input_dim
}

// probs = softmax(logits): dL/dlogits_k = p_k * (dL/dp_k - sum_j dL/dp_j p_j).
Eigen::MatrixXd softmax_jacobian_vjp(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& d_probs) {
  Eigen::MatrixXd d_logits(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double dot = probs.row(i).dot(d_probs.row(i));
    d_logits.row(i) = probs.row(i).array() * (d_probs.row(i).array() - dot);
  }
  return d_logits;
}

// Per-sample magnitude-level gradients pulled back to window-length grads.
void backward_domain_windows(const DomainForward& fwd, const Eigen::MatrixXd& d_features,
                             double bsq_weight, int pool_rows, int pool_cols,
                             const Eigen::MatrixXd& w_dlen, const Eigen::MatrixXd& w_dbeta,
                             const TrainConfig& cfg, Eigen::VectorXd& d_lengths, double& d_beta) {
  const auto n = fwd.frames.size();
  for (std::size_t b = 0; b < n; ++b) {
    const Eigen::MatrixXd& mag = fwd.mags[b];
    const Eigen::VectorXd d_flat = d_features.row(static_cast<Eigen::Index>(b)).transpose();
    Eigen::MatrixXd d_mag =
        average_pool_backward(unflatten_rowmajor(d_flat, pool_rows, pool_cols), mag.rows(),
                              mag.cols());
    if (bsq_weight != 0.0) d_mag += bsq_grad(mag, cfg.cv_eps, bsq_weight);
    const Eigen::MatrixXd d_windowed = dmag_to_dwindowed(fwd.specs[b], d_mag);
    const Eigen::MatrixXd d_window = d_windowed.cwiseProduct(fwd.frames[b].frames);
    d_lengths += d_window.cwiseProduct(w_dlen).rowwise().sum();
    if (cfg.learn_beta) d_beta += d_window.cwiseProduct(w_dbeta).sum();
  }
}

}  // namespace

BatchLosses compute_batch(const TrainState& state, const Dataset& src,
                          const std::vector<std::size_t>& src_idx, const Dataset& tgt,
                          const std::vector<std::size_t>& tgt_idx, const TrainConfig& cfg,
                          double lambda0_value, Grads* out) {
  if (src_idx.size() != tgt_idx.size() || src_idx.empty()) {
    throw std::invalid_argument("compute_batch: paired non-empty batches required");
  }
  if (src.labels.size() != src.signals.size()) {
    throw std::invalid_argument("compute_batch: source dataset must be labeled");
  }
  const auto n = src_idx.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  const ResampledTime bt = resampled_time(state.win_src.n_frames(), cfg.support);
  const MaskMatrix mask_src = mask_matrix(bt, state.win_src.lengths, cfg.soft_width);
  const MaskMatrix mask_tgt = mask_matrix(bt, state.win_tgt.lengths, cfg.soft_width);
  const Eigen::MatrixXd w_src = modulated_kaiser(mask_src, state.win_src.lengths, bt, state.win_src.beta);
  const Eigen::MatrixXd w_tgt = modulated_kaiser(mask_tgt, state.win_tgt.lengths, bt, state.win_tgt.beta);

  const DomainForward f_src = forward_domain(state, src, src_idx, state.win_src, w_src, cfg);
  const DomainForward f_tgt = forward_domain(state, tgt, tgt_idx, state.win_tgt, w_tgt, cfg);

  BatchLosses losses;
  losses.l_sbsq = f_src.bsq_mean;
  losses.l_tbsq = f_tgt.bsq_mean;

  if (cfg.include_classification) {
    double cl = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      cl += smoothed_cross_entropy(f_src.logits.row(static_cast<Eigen::Index>(b)).transpose(),
                                   src.labels[src_idx[b]], cfg.label_smoothing);
    }
    losses.l_cl = cl * inv_n;
  }

  const KernelBandwidths bw = median_heuristic_bandwidths(f_src.features, f_tgt.features);
  losses.l_m = domain_metric(f_src.features, f_src.probs, f_tgt.features, f_tgt.probs, bw);

  if (out == nullptr) return losses;

  // ---- Backward ----
  Eigen::MatrixXd d_logits_src = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), state.net.n_classes);
  Eigen::MatrixXd d_logits_tgt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), state.net.n_classes);
  Eigen::MatrixXd d_feat_src = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), state.net.input_dim());
  Eigen::MatrixXd d_feat_tgt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), state.net.input_dim());

  if (cfg.include_classification) {
    for (std::size_t b = 0; b < n; ++b) {
      d_logits_src.row(static_cast<Eigen::Index>(b)) +=
          inv_n * smoothed_cross_entropy_grad(
                      f_src.logits.row(static_cast<Eigen::Index>(b)).transpose(),
                      src.labels[src_idx[b]], cfg.label_smoothing)
                      .transpose();
    }
  }

  if (lambda0_value != 0.0) {
    const DomainMetricGrad mg = domain_metric_backward(f_src.features, f_src.probs, f_tgt.features,
                                                       f_tgt.probs, bw, lambda0_value);
    d_feat_src += mg.d_x_src;
    d_feat_tgt += mg.d_x_tgt;
    d_logits_src += softmax_jacobian_vjp(f_src.probs, mg.d_z_src);
    d_logits_tgt += softmax_jacobian_vjp(f_tgt.probs, mg.d_z_tgt);
  }

  if (out->net.size() != state.net.param_count()) out->net = Eigen::VectorXd::Zero(state.net.param_count());
  if (out->win_src.size() != state.win_src.n_frames()) out->win_src = Eigen::VectorXd::Zero(state.win_src.n_frames());
  if (out->win_tgt.size() != state.win_tgt.n_frames()) out->win_tgt = Eigen::VectorXd::Zero(state.win_tgt.n_frames());

  const Eigen::MatrixXd d_x_src = backward_classifier(state.net, f_src, d_logits_src, d_feat_src, out->net);
  const Eigen::MatrixXd d_x_tgt = backward_classifier(state.net, f_tgt, d_logits_tgt, d_feat_tgt, out->net);

  const Eigen::MatrixXd wg_src = window_grad_wrt_length(mask_src, state.win_src.lengths, bt, state.win_src.beta);
  const Eigen::MatrixXd wg_tgt = window_grad_wrt_length(mask_tgt, state.win_tgt.lengths, bt, state.win_tgt.beta);
  Eigen::MatrixXd wb_src, wb_tgt;
  if (cfg.learn_beta) {
    wb_src = window_grad_wrt_beta(mask_src, state.win_src.lengths, bt, state.win_src.beta);
    wb_tgt = window_grad_wrt_beta(mask_tgt, state.win_tgt.lengths, bt, state.win_tgt.beta);
  }

  backward_domain_windows(f_src, d_x_src, cfg.lambda1 * inv_n, state.net.pool_rows,
                          state.net.pool_cols, wg_src, wb_src, cfg, out->win_src, out->beta_src);
  backward_domain_windows(f_tgt, d_x_tgt, cfg.lambda2 * inv_n, state.net.pool_rows,
                          state.net.pool_cols, wg_tgt, wb_tgt, cfg, out->win_tgt, out->beta_tgt);
  return losses;
}

TrainResult train(const Dataset& src, const Dataset& tgt, const TrainConfig& cfg,
                  const Dataset* eval_set) {
  if (src.labels.size() != src.signals.size() || src.signals.empty()) {
    throw std::invalid_argument("train: source dataset must be labeled and non-empty");
  }
  if (tgt.signals.empty()) throw std::invalid_argument("train: target dataset is empty");
  if (src.n_classes < 2) throw std::invalid_argument("train: need at least two classes");
  for (const auto& s : src.signals) {
    if (static_cast<int>(s.samples.size()) != cfg.sample_len) {
      throw std::invalid_argument("train: source sample length differs from config");
    }
  }
  for (const auto& s : tgt.signals) {
    if (static_cast<int>(s.samples.size()) != cfg.sample_len) {
      throw std::invalid_argument("train: target sample length differs from config");
    }
  }

  const long padded = padded_length(cfg.sample_len, cfg.support, cfg.hop, FrameCountMode::Paper);
  const long n_frames = frame_count(padded, cfg.support, cfg.hop, FrameCountMode::Paper);

  Rng rng(cfg.seed);
  TrainResult result;
  result.state.net = TinyClassifier::make(cfg.pool_rows, cfg.pool_cols, cfg.hidden_units,
                                          src.n_classes, rng);
  result.state.win_src = WindowParams::full(n_frames, cfg.support, cfg.hop, cfg.beta);
  result.state.win_tgt = WindowParams::full(n_frames, cfg.support, cfg.hop, cfg.beta);
  result.state.opt_net = AdamW{.lr = cfg.lr_net, .weight_decay = cfg.weight_decay};
  result.state.opt_win_src = AdamW{.lr = cfg.lr_window};
  result.state.opt_win_tgt = AdamW{.lr = cfg.lr_window};

  std::vector<std::size_t> src_order(src.size()), tgt_order(tgt.size());
  std::iota(src_order.begin(), src_order.end(), 0u);
  std::iota(tgt_order.begin(), tgt_order.end(), 0u);
  const std::size_t n_batches =
      std::min(src.size(), tgt.size()) / static_cast<std::size_t>(cfg.batch_size);
  if (n_batches == 0) throw std::invalid_argument("train: datasets smaller than one batch");

  result.history.reserve(static_cast<std::size_t>(cfg.max_epoch));
  for (int epoch = 0; epoch < cfg.max_epoch; ++epoch) {
    result.state.epoch = epoch;
    const double l0 = cfg.lambda0_off ? 0.0 : lambda0(epoch, cfg.max_epoch);
    rng.shuffle(src_order);
    rng.shuffle(tgt_order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lambda0 = l0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::vector<std::size_t> sidx(src_order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                                          src_order.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg.batch_size));
      const std::vector<std::size_t> tidx(tgt_order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                                          tgt_order.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg.batch_size));
      Grads grads;
      const BatchLosses losses = compute_batch(result.state, src, sidx, tgt, tidx, cfg, l0, &grads);
      const double total = losses.l_cl + l0 * losses.l_m + cfg.lambda1 * losses.l_sbsq +
                           cfg.lambda2 * losses.l_tbsq;
      if (!std::isfinite(total) || total > cfg.divergence_limit) {
        throw divergence_error("train: loss diverged (total = " + format_double(total) + ")");
      }
      optimizer_step(result.state, grads, cfg);
      stats.l_cl += losses.l_cl;
      stats.l_m += losses.l_m;
      stats.l_sbsq += losses.l_sbsq;
      stats.l_tbsq += losses.l_tbsq;
    }
    const double inv_b = 1.0 / static_cast<double>(n_batches);
    stats.l_cl *= inv_b;
    stats.l_m *= inv_b;
    stats.l_sbsq *= inv_b;
    stats.l_tbsq *= inv_b;
    stats.total = stats.l_cl + l0 * stats.l_m + cfg.lambda1 * stats.l_sbsq + cfg.lambda2 * stats.l_tbsq;
    stats.target_acc = eval_set != nullptr ? evaluate(result.state, *eval_set).accuracy : -1.0;
    result.history.push_back(stats);
  }
  result.state.epoch = cfg.max_epoch;
  return result;
}

Evaluation evaluate(const TrainState& state, const Dataset& test) {
  if (test.labels.size() != test.signals.size() || test.signals.empty()) {
    throw std::invalid_argument("evaluate: test dataset must be labeled and non-empty");
  }
  if (test.n_classes != state.net.n_classes) {
    throw std::invalid_argument("evaluate: class count mismatch");
  }
  const WindowParams& win = state.win_tgt;  // target-domain windows at test time
  const ResampledTime bt = resampled_time(win.n_frames(), win.support);
  const MaskMatrix mask = mask_matrix(bt, win.lengths, /*soft_width=*/0.0);
  const Eigen::MatrixXd w = modulated_kaiser(mask, win.lengths, bt, win.beta);

  Evaluation out;
  out.confusion = Eigen::MatrixXi::Zero(test.n_classes, test.n_classes);
  for (std::size_t i = 0; i < test.signals.size(); ++i) {
    const FrameMatrix fm = frame_signal(test.signals[i], win.support, win.hop, PadMode::Zero);
    if (fm.n_frames() != win.n_frames()) {
      throw std::invalid_argument("evaluate: frame count differs from trained geometry");
    }
    const Spectrogram spec = windowed_stft(fm, w, test.signals[i].sample_rate);
    const Eigen::MatrixXd pooled =
        average_pool(magnitude(spec), state.net.pool_rows, state.net.pool_cols);
    const auto act = state.net.forward(flatten_rowmajor(pooled));
    const auto pred = manual_argmax(act.logits);
    out.confusion(test.labels[i], static_cast<Eigen::Index>(pred)) += 1;
  }
  out.accuracy = static_cast<double>(out.confusion.trace()) / static_cast<double>(test.size());
  return out;
}

void save_history_csv(const History& history, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "epoch,l_cl,l_m,l_sbsq,l_tbsq,lambda0,total,target_acc\n";
  for (const auto& row : history) {
    os << row.epoch << ',' << format_double(row.l_cl) << ',' << format_double(row.l_m) << ','
       << format_double(row.l_sbsq) << ',' << format_double(row.l_tbsq) << ','
       << format_double(row.lambda0) << ',' << format_double(row.total) << ','
       << format_double(row.target_acc) << '\n';
  }
  write_text_file(path, os.str());
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "# tfa checkpoint v1\n";
  os << "# net pool_rows=" << state.net.pool_rows << " pool_cols=" << state.net.pool_cols
     << " hidden=" << state.net.hidden << " classes=" << state.net.n_classes << '\n';
  for (Eigen::Index i = 0; i < state.net.params.size(); ++i) {
    os << format_double(state.net.params(i)) << '\n';
  }
  const auto window_section = [&os](const char* name, const WindowParams& w) {
    os << "# window " << name << " n=" << w.n_frames() << " beta=" << format_double(w.beta)
       << " support=" << w.support << " hop=" << w.hop << '\n';
    for (Eigen::Index i = 0; i < w.lengths.size(); ++i) os << format_double(w.lengths(i)) << '\n';
  };
  window_section("source", state.win_src);
  window_section("target", state.win_tgt);
  write_text_file(path, os.str());
}

namespace {

long header_field(const std::string& line, const std::string& key, const std::string& context) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) throw io_error(context + ": missing field '" + key + "'");
  return static_cast<long>(parse_double(
      line.substr(pos + key.size() + 1,
                  line.find(' ', pos + key.size() + 1) - pos - key.size() - 1),
      context + " " + key));
}

double header_field_d(const std::string& line, const std::string& key, const std::string& context) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) throw io_error(context + ": missing field '" + key + "'");
  return parse_double(line.substr(pos + key.size() + 1,
                                  line.find(' ', pos + key.size() + 1) - pos - key.size() - 1),
                      context + " " + key);
}

}  // namespace

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  const std::string ctx = path.string();
  std::string line;
  if (!std::getline(in, line) || line.rfind("# tfa checkpoint", 0) != 0) {
    throw io_error(ctx + ": not a checkpoint file");
  }
  if (!std::getline(in, line) || line.rfind("# net ", 0) != 0) {
    throw io_error(ctx + ": missing net section");
  }
  TrainState state;
  state.net.pool_rows = static_cast<int>(header_field(line, "pool_rows", ctx));
  state.net.pool_cols = static_cast<int>(header_field(line, "pool_cols", ctx));
  state.net.hidden = static_cast<int>(header_field(line, "hidden", ctx));
  state.net.n_classes = static_cast<int>(header_field(line, "classes", ctx));
  const ParamLayout l = layout(state.net.input_dim(), state.net.hidden, state.net.n_classes);
  state.net.params.resize(l.total);
  for (Eigen::Index i = 0; i < l.total; ++i) {
    if (!std::getline(in, line)) throw io_error(ctx + ": truncated net section");
    state.net.params(i) = parse_double(line, ctx + " net params");
  }
  const auto read_window = [&](const char* name) {
    if (!std::getline(in, line) || line.rfind("# window ", 0) != 0 ||
        line.find(name) == std::string::npos) {
      throw io_error(ctx + ": missing window section '" + name + "'");
    }
    WindowParams w;
    const long n = header_field(line, "n", ctx);
    w.beta = header_field_d(line, "beta", ctx);
    w.support = static_cast<int>(header_field(line, "support", ctx));
    w.hop = static_cast<int>(header_field(line, "hop", ctx));
    w.lengths.resize(n);
    for (long i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw io_error(ctx + ": truncated window section");
      w.lengths(i) = parse_double(line, ctx + " window lengths");
    }
    return w;
  };
  state.win_src = read_window("source");
  state.win_tgt = read_window("target");
  return state;
}

DomainRecipe source_recipe() { return DomainRecipe{}; }

DomainRecipe target_recipe() {
  DomainRecipe r;
  for (auto& f : r.resonance_hz) f *= 1.4;
  r.snr_db = 5.0;
  return r;
}

Dataset synth_domain(const DomainRecipe& recipe, int per_class, int sample_len,
                     std::uint64_t seed, std::uint64_t stream) {
  if (per_class < 1) throw std::invalid_argument("synth_domain: per_class must be >= 1");
  if (sample_len < 2) throw std::invalid_argument("synth_domain: sample_len must be >= 2");
  Dataset data;
  data.n_classes = 4;
  data.signals.reserve(static_cast<std::size_t>(4 * per_class));
  data.labels.reserve(static_cast<std::size_t>(4 * per_class));
  const double duration = static_cast<double>(sample_len) / recipe.sample_rate;
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < per_class; ++k) {
      const auto tags = {stream, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)};
      Rng jitter(derive_seed(seed, tags));
      const double f0 = recipe.shaft_start_hz * (1.0 + recipe.speed_jitter * jitter.uniform(-1.0, 1.0));
      const double f1 = recipe.shaft_end_hz * (1.0 + recipe.speed_jitter * jitter.uniform(-1.0, 1.0));
      const SpeedProfile profile = SpeedProfile::linear(f0, f1, duration);
      FaultSpec fault;
      fault.class_id = c;
      fault.impulses_per_rev = recipe.impulses_per_rev[static_cast<std::size_t>(c)];
      fault.resonance_hz = recipe.resonance_hz[static_cast<std::size_t>(c)];
      fault.decay = recipe.decay;
      fault.snr_db = recipe.snr_db;
      data.signals.push_back(gen_fault_signal(profile, fault, recipe.sample_rate,
                                              static_cast<std::size_t>(sample_len),
                                              jitter.next_u64()));
      data.labels.push_back(c);
    }
  }
  return data;
}

}  // namespace tfa
