#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "tfa/metrics.hpp"
#include "tfa/rng.hpp"
#include "tfa/signal.hpp"
#include "tfa/stft.hpp"

namespace tfa {

/// A set of equal-length signals with optional class labels.
struct Dataset {
  std::vector<Signal> signals;
  std::vector<int> labels;  ///< empty when unlabeled
  int n_classes = 0;

  std::size_t size() const { return signals.size(); }
};

/// Training hyper-parameters. Defaults follow the reference configuration:
/// batch 20, stride 16, 200 epochs, seed 3407, AdamW with lr 1e-3 for the
/// network and 100.0 for the window lengths, sample length 3072, Kaiser window.
struct TrainConfig {
  int batch_size = 20;
  int hop = 16;              ///< stride between frames
  int support = 128;         ///< N, frame/window support
  int max_epoch = 200;
  std::uint64_t seed = 3407;
  double lr_net = 1e-3;      ///< mu
  double lr_window = 100.0;  ///< kappa
  double lambda1 = 1.0;      ///< source BSQ weight
  double lambda2 = 0.01;     ///< target BSQ weight
  int sample_len = 3072;
  double beta = 8.0;         ///< Kaiser shape (fixed unless learn_beta)
  double soft_width = 2.0;   ///< mask transition band during training
  double label_smoothing = 0.1;
  double weight_decay = 0.01;  ///< network group only, never window lengths
  int pool_rows = 8;
  int pool_cols = 8;
  int hidden_units = 64;
  bool lambda0_off = false;  ///< ablation: zero the domain-metric term
  bool learn_beta = false;
  bool include_classification = true;  ///< off only for gradient-routing checks
  double divergence_limit = 1e6;
  double cv_eps = kCvEps;
};

/// Pooled-feature classifier: spectrogram magnitude -> average pool to a fixed
/// grid -> flatten -> one hidden ReLU layer -> class logits. Parameters live in
/// one flat vector so the optimizer can treat them as a single group.
struct TinyClassifier {
  int pool_rows = 0;
  int pool_cols = 0;
  int hidden = 0;
  int n_classes = 0;
  Eigen::VectorXd params;  ///< [w1 (hidden x in), b1, w2 (classes x hidden), b2]

  static TinyClassifier make(int pool_rows, int pool_cols, int hidden, int n_classes, Rng& rng);

  int input_dim() const { return pool_rows * pool_cols; }
  Eigen::Index param_count() const { return params.size(); }

  Eigen::Map<const Eigen::MatrixXd> w1() const;
  Eigen::Map<const Eigen::VectorXd> b1() const;
  Eigen::Map<const Eigen::MatrixXd> w2() const;
  Eigen::Map<const Eigen::VectorXd> b2() const;

  struct Activations {
    Eigen::VectorXd x;       ///< pooled input
    Eigen::VectorXd hidden;  ///< post-ReLU
    Eigen::VectorXd logits;
    Eigen::VectorXd probs;   ///< softmax(logits)
  };
  Activations forward(const Eigen::VectorXd& pooled_flat) const;
};

/// Average-pools a matrix down to out_rows x out_cols (block boundaries by
/// integer rounding) and the matching gradient operation.
Eigen::MatrixXd average_pool(const Eigen::MatrixXd& in, int out_rows, int out_cols);
Eigen::MatrixXd average_pool_backward(const Eigen::MatrixXd& d_pooled, Eigen::Index in_rows,
                                      Eigen::Index in_cols);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Cross-entropy against the smoothed target: (1-s) on the true class,
/// s/(K-1) elsewhere. Natural log.
double smoothed_cross_entropy(const Eigen::VectorXd& logits, int label, double smoothing);

/// dL/dlogits = softmax(logits) - smoothed_target.
Eigen::VectorXd smoothed_cross_entropy_grad(const Eigen::VectorXd& logits, int label,
                                            double smoothing);

/// Multi-bandwidth Gaussian kernels: k1 on features (sum over `feature`
/// bandwidths of exp(-d2/bw)), k2 on classifier outputs (one bandwidth).
struct KernelBandwidths {
  std::vector<double> feature;
  double output = 1.0;
};

/// Five bandwidths geometrically spaced (x1/4 .. x4) around the median pairwise
/// squared distance of the stacked source+target features. The bandwidths are
/// treated as constants by the gradient.
KernelBandwidths median_heuristic_bandwidths(const Eigen::MatrixXd& x_src,
                                             const Eigen::MatrixXd& x_tgt);

/// Biased joint-MMD^2 between (feature, output) batches, diagonal included:
///   mean_ss k1*k2 + mean_tt k1*k2 - 2 * mean_st k1*k2.
/// Rows are samples; batch sizes must match. Nonnegative up to rounding.
double domain_metric(const Eigen::MatrixXd& x_src, const Eigen::MatrixXd& z_src,
                     const Eigen::MatrixXd& x_tgt, const Eigen::MatrixXd& z_tgt,
                     const KernelBandwidths& bw);

struct DomainMetricGrad {
  Eigen::MatrixXd d_x_src, d_z_src, d_x_tgt, d_z_tgt;
};

DomainMetricGrad domain_metric_backward(const Eigen::MatrixXd& x_src, const Eigen::MatrixXd& z_src,
                                        const Eigen::MatrixXd& x_tgt, const Eigen::MatrixXd& z_tgt,
                                        const KernelBandwidths& bw, double upstream);

/// Domain-metric weight schedule: -4/(sqrt(epoch/max_epoch)+1)+4, growing
/// monotonically from 0 at epoch 0 to 2 at epoch max_epoch.
double lambda0(int epoch, int max_epoch);

/// Composite objective: l_cl + lambda0*l_m + lambda1*l_sbsq + lambda2*l_tbsq.
double total_loss(double l_cl, double l_m, double l_sbsq, double l_tbsq, int epoch,
                  const TrainConfig& cfg);

/// AdamW over one flat parameter group (decoupled weight decay).
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  Eigen::VectorXd m, v;
  long steps = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

/// Everything the training loop mutates. Source and target window parameters
/// are separate storage; only the classifier is shared across domains.
struct TrainState {
  TinyClassifier net;
  WindowParams win_src;  ///< theta_0
  WindowParams win_tgt;  ///< theta_1
  AdamW opt_net, opt_win_src, opt_win_tgt;
  int epoch = 0;
};

struct Grads {
  Eigen::VectorXd net;
  Eigen::VectorXd win_src;
  Eigen::VectorXd win_tgt;
  double beta_src = 0.0;
  double beta_tgt = 0.0;
};

/// One AdamW step per parameter group; window lengths are clamped back into
/// (1, support] afterwards. Throws divergence_error on non-finite gradients.
void optimizer_step(TrainState& state, const Grads& grads, const TrainConfig& cfg);

struct BatchLosses {
  double l_cl = 0.0;
  double l_m = 0.0;
  double l_sbsq = 0.0;
  double l_tbsq = 0.0;
};

/// Forward + backward over one paired batch (source indices carry labels;
/// target indices are used unlabeled). `lambda0_value` is the already
/// scheduled domain weight. Gradients are accumulated into `out` when non-null.
BatchLosses compute_batch(const TrainState& state, const Dataset& src,
                          const std::vector<std::size_t>& src_idx, const Dataset& tgt,
                          const std::vector<std::size_t>& tgt_idx, const TrainConfig& cfg,
                          double lambda0_value, Grads* out);

struct EpochStats {
  int epoch = 0;
  double l_cl = 0.0;
  double l_m = 0.0;
  double l_sbsq = 0.0;
  double l_tbsq = 0.0;
  double lambda0 = 0.0;
  double total = 0.0;
  double target_acc = 0.0;
};

using History = std::vector<EpochStats>;

struct TrainResult {
  TrainState state;
  History history;
};

/// Full training loop over paired source/target batches. Deterministic for a
/// fixed config. When `eval_set` is given, each history row carries the
/// target-domain test accuracy for that epoch (otherwise -1).
TrainResult train(const Dataset& src, const Dataset& tgt, const TrainConfig& cfg,
                  const Dataset* eval_set = nullptr);

struct Evaluation {
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;  ///< rows: true class, cols: predicted
};

/// Test-time evaluation: target-domain window parameters, hard mask.
Evaluation evaluate(const TrainState& state, const Dataset& test);

/// History CSV: "epoch,l_cl,l_m,l_sbsq,l_tbsq,lambda0,total,target_acc".
void save_history_csv(const History& history, const std::filesystem::path& path);

/// Flat text checkpoint (classifier + both window-length sections). Optimizer
/// moments are not persisted; a reloaded state is ready for evaluation.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Synthetic two-domain benchmark: per-class chirp + impulse-train recipes.
/// The target domain shifts every resonance band by x1.4 and drops the SNR
/// from 10 dB to 5 dB, a covariate shift the domain metric can reduce.
struct DomainRecipe {
  double sample_rate = 8192.0;
  double shaft_start_hz = 15.0;
  double shaft_end_hz = 40.0;
  double speed_jitter = 0.1;  ///< relative per-sample jitter on both endpoints
  std::array<double, 4> impulses_per_rev{0.0, 5.4, 3.56, 2.32};
  std::array<double, 4> resonance_hz{0.0, 1800.0, 1200.0, 800.0};
  double decay = 350.0;
  double snr_db = 10.0;
};

DomainRecipe source_recipe();
DomainRecipe target_recipe();

/// Generates `per_class` samples for each of the four classes. `stream` keeps
/// train/test draws independent for the same base seed.
Dataset synth_domain(const DomainRecipe& recipe, int per_class, int sample_len,
                     std::uint64_t seed, std::uint64_t stream);

}  // namespace tfa
