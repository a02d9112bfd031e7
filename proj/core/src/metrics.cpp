#include "tfa/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace tfa {
namespace {

void check_shape(const Eigen::MatrixXd& mag) {
  if (mag.rows() < 2 || mag.cols() < 2) {
    throw std::invalid_argument("metrics: magnitude matrix must be at least 2x2");
  }
  if ((mag.array() < 0.0).any()) {
    throw std::invalid_argument("metrics: magnitudes must be nonnegative");
  }
}

Eigen::Index argmax_lowest(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;  // strict '>' keeps the lowest index on ties
  }
  return best;
}

double rational_quality(const Eigen::VectorXd& cv) {
  const double max = cv.maxCoeff();
  if (!(max > 0.0)) throw std::invalid_argument("quality_coeffs: degenerate spectrogram");
  return (cv / max).mean();
}

}  // namespace

ColRowMeans col_row_means(const Eigen::MatrixXd& mag) {
  check_shape(mag);
  ColRowMeans m;
  m.mu_f = mag.rowwise().mean();
  m.mu_t = mag.colwise().mean();
  return m;
}

ColRowStds col_row_stds(const Eigen::MatrixXd& mag, const ColRowMeans& means) {
  check_shape(mag);
  const Eigen::Index rows = mag.rows();
  const Eigen::Index cols = mag.cols();
  ColRowStds s;
  s.sigma_f.resize(rows);
  s.sigma_t.resize(cols);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double ss = (mag.row(t).array() - means.mu_f(t)).square().sum();
    s.sigma_f(t) = std::sqrt(ss / static_cast<double>(cols - 1));
  }
  for (Eigen::Index f = 0; f < cols; ++f) {
    const double ss = (mag.col(f).array() - means.mu_t(f)).square().sum();
    s.sigma_t(f) = std::sqrt(ss / static_cast<double>(rows - 1));
  }
  return s;
}

Eigen::VectorXd balanced_cv(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("balanced_cv: eps must be positive");
  if (mu.size() != sigma.size()) throw std::invalid_argument("balanced_cv: size mismatch");
  return mu.array() / (sigma.array() + eps);
}

QualityCoeffs quality_coeffs(const Eigen::VectorXd& cv_f, const Eigen::VectorXd& cv_t) {
  if (cv_f.size() == 0 || cv_t.size() == 0) {
    throw std::invalid_argument("quality_coeffs: empty coefficient vector");
  }
  return {rational_quality(cv_f), rational_quality(cv_t)};
}

double bsq(double q_f, double q_t) { return 2.0 * q_f * q_t / (q_f + q_t); }

Eigen::MatrixXd bsq_grad(const Eigen::MatrixXd& mag, double eps, double upstream) {
  check_shape(mag);
  const Eigen::Index rows = mag.rows();
  const Eigen::Index cols = mag.cols();

  const ColRowMeans means = col_row_means(mag);
  const ColRowStds stds = col_row_stds(mag, means);
  const Eigen::VectorXd cv_f = balanced_cv(means.mu_f, stds.sigma_f, eps);
  const Eigen::VectorXd cv_t = balanced_cv(means.mu_t, stds.sigma_t, eps);
  const QualityCoeffs q = quality_coeffs(cv_f, cv_t);

  // bsq = 2*q_f*q_t/(q_f+q_t); d(bsq)/d(q_f) = 2*q_t^2/(q_f+q_t)^2.
  const double denom = q.q_f + q.q_t;
  const double d_qf = upstream * 2.0 * q.q_t * q.q_t / (denom * denom);
  const double d_qt = upstream * 2.0 * q.q_f * q.q_f / (denom * denom);

  // q = sum(cv)/ (n * max). Non-argmax entries get 1/(n*max); the argmax also
  // collects the quotient-rule term -sum(cv)/(n*max^2).
  const auto cv_grad = [](const Eigen::VectorXd& cv, double dq) {
    const Eigen::Index n = cv.size();
    const Eigen::Index star = argmax_lowest(cv);
    const double max = cv(star);
    Eigen::VectorXd d = Eigen::VectorXd::Constant(n, dq / (static_cast<double>(n) * max));
    d(star) += dq * -cv.sum() / (static_cast<double>(n) * max * max);
    return d;
  };
  const Eigen::VectorXd d_cvf = cv_grad(cv_f, d_qf);
  const Eigen::VectorXd d_cvt = cv_grad(cv_t, d_qt);

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(rows, cols);

  // Row direction: cv = mu/(sigma+eps) with mu, sigma per row.
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double guard = stds.sigma_f(t) + eps;
    const double d_mu = d_cvf(t) / guard;
    const double d_sigma = -d_cvf(t) * means.mu_f(t) / (guard * guard);
    for (Eigen::Index f = 0; f < cols; ++f) {
      double g = d_mu / static_cast<double>(cols);
      if (stds.sigma_f(t) > 0.0) {
        g += d_sigma * (mag(t, f) - means.mu_f(t)) /
             (static_cast<double>(cols - 1) * stds.sigma_f(t));
      }
      grad(t, f) += g;
    }
  }
  // Column direction.
  for (Eigen::Index f = 0; f < cols; ++f) {
    const double guard = stds.sigma_t(f) + eps;
    const double d_mu = d_cvt(f) / guard;
    const double d_sigma = -d_cvt(f) * means.mu_t(f) / (guard * guard);
    for (Eigen::Index t = 0; t < rows; ++t) {
      double g = d_mu / static_cast<double>(rows);
      if (stds.sigma_t(f) > 0.0) {
        g += d_sigma * (mag(t, f) - means.mu_t(f)) /
             (static_cast<double>(rows - 1) * stds.sigma_t(f));
      }
      grad(t, f) += g;
    }
  }
  return grad;
}

double renyi_entropy(const Eigen::MatrixXd& mag, double alpha) {
  if (!(alpha > 0.0) || alpha == 1.0) {
    throw std::invalid_argument("renyi_entropy: alpha must be positive and != 1");
  }
  const double energy = mag.array().square().sum();
  if (!(energy > 0.0)) throw std::invalid_argument("renyi_entropy: all-zero magnitude matrix");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mag.rows(); ++i) {
    for (Eigen::Index j = 0; j < mag.cols(); ++j) {
      const double p = mag(i, j) * mag(i, j) / energy;
      if (p > 0.0) acc += std::pow(p, alpha);
    }
  }
  return std::log2(acc) / (1.0 - alpha);
}

QualityReport quality_report(const Eigen::MatrixXd& mag, double eps, double alpha) {
  const ColRowMeans means = col_row_means(mag);
  const ColRowStds stds = col_row_stds(mag, means);
  QualityReport report;
  report.eps_guard_hits = static_cast<int>((stds.sigma_f.array() == 0.0).count() +
                                           (stds.sigma_t.array() == 0.0).count());
  const Eigen::VectorXd cv_f = balanced_cv(means.mu_f, stds.sigma_f, eps);
  const Eigen::VectorXd cv_t = balanced_cv(means.mu_t, stds.sigma_t, eps);
  const QualityCoeffs q = quality_coeffs(cv_f, cv_t);
  report.q_f = q.q_f;
  report.q_t = q.q_t;
  report.bsq = bsq(q.q_f, q.q_t);
  report.renyi = renyi_entropy(mag, alpha);
  return report;
}

}  // namespace tfa
