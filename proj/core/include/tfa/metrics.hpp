#pragma once

#include <Eigen/Core>

namespace tfa {

/// Per-spectrogram quality numbers. Lower BSQ / Renyi entropy mean more
/// concentrated energy; a uniform magnitude matrix scores bsq exactly 1.
struct QualityReport {
  double q_f = 0.0;          ///< frequency-direction rational quality, in (0, 1]
  double q_t = 0.0;          ///< time-direction rational quality, in (0, 1]
  double bsq = 0.0;          ///< harmonic mean of q_f and q_t
  double renyi = 0.0;        ///< order-alpha Renyi entropy, bits
  int eps_guard_hits = 0;    ///< rows/columns whose std was exactly 0
};

/// Default guard added to standard deviations before dividing.
inline constexpr double kCvEps = 1e-12;

/// Default Renyi order; entropy uses the squared-magnitude (energy)
/// distribution and log base 2.
inline constexpr double kRenyiAlpha = 3.0;

struct ColRowMeans {
  Eigen::VectorXd mu_f;  ///< per-row means (one per frame t)
  Eigen::VectorXd mu_t;  ///< per-column means (one per bin f)
};

/// Row and column means of a nonnegative magnitude matrix (needs >= 2 rows
/// and >= 2 columns so the sample standard deviations exist).
ColRowMeans col_row_means(const Eigen::MatrixXd& mag);

struct ColRowStds {
  Eigen::VectorXd sigma_f;
  Eigen::VectorXd sigma_t;
};

/// Sample standard deviations with (F-1)/(T-1) denominators.
ColRowStds col_row_stds(const Eigen::MatrixXd& mag, const ColRowMeans& means);

/// Balanced coefficient of variation: mean / (std + eps). Smaller is better.
Eigen::VectorXd balanced_cv(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, double eps);

struct QualityCoeffs {
  double q_f = 0.0;
  double q_t = 0.0;
};

/// Max-normalized averages of the balanced CVs; throws on an all-zero vector
/// ("degenerate spectrogram").
QualityCoeffs quality_coeffs(const Eigen::VectorXd& cv_f, const Eigen::VectorXd& cv_t);

/// Harmonic mean 2*q_f*q_t / (q_f + q_t).
double bsq(double q_f, double q_t);

/// Full analytic gradient of the BSQ loss with respect to every magnitude
/// cell, scaled by `upstream`. Max-normalization routes gradient through the
/// argmax element as well (quotient rule); ties break toward the lowest index.
/// Constant rows/columns (std exactly 0) use a zero subgradient for the std.
Eigen::MatrixXd bsq_grad(const Eigen::MatrixXd& mag, double eps, double upstream);

/// Order-alpha Renyi entropy in bits of the energy distribution
/// p = mag^2 / sum(mag^2). Evaluation-only by contract (not differentiated).
double renyi_entropy(const Eigen::MatrixXd& mag, double alpha);

/// Convenience bundle of the full pipeline.
QualityReport quality_report(const Eigen::MatrixXd& mag, double eps = kCvEps,
                             double alpha = kRenyiAlpha);

}  // namespace tfa
