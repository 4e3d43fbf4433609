#pragma once

#include <cmath>
#include <vector>

#include "resfgb/common.hpp"

namespace resfgb {

enum class LossKind { logistic, smooth_hinge };

inline const char* loss_name(LossKind k) {
  return k == LossKind::logistic ? "logistic" : "smooth-hinge";
}

namespace detail {

// Quadratically smoothed hinge: 0 below 0, t^2/2 on (0,1), t - 1/2 above.
inline double smooth_hinge_psi(double t) {
  if (t <= 0.0) return 0.0;
  if (t < 1.0) return 0.5 * t * t;
  return t - 0.5;
}

inline double smooth_hinge_dpsi(double t) {
  if (t <= 0.0) return 0.0;
  if (t < 1.0) return t;
  return 1.0;
}

}  // namespace detail

// Multiclass loss on a logit vector. Logistic is the softmax cross entropy
// computed with max subtraction; smooth_hinge sums the smoothed hinge over
// the margins 1 + z_k - z_y, k != y.
inline double loss_value(LossKind kind, const RowVector& z, int y) {
  const int c = static_cast<int>(z.size());
  if (y < 0 || y >= c) throw std::invalid_argument("label out of range");
  if (kind == LossKind::logistic) {
    double m = z.maxCoeff();
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += std::exp(z(k) - m);
    return std::log(sum) + m - z(y);
  }
  double total = 0.0;
  for (int k = 0; k < c; ++k) {
    if (k == y) continue;
    total += detail::smooth_hinge_psi(1.0 + z(k) - z(y));
  }
  return total;
}

// Gradient with respect to the logits.
inline RowVector grad_logits(LossKind kind, const RowVector& z, int y) {
  const int c = static_cast<int>(z.size());
  if (y < 0 || y >= c) throw std::invalid_argument("label out of range");
  RowVector g(c);
  if (kind == LossKind::logistic) {
    double m = z.maxCoeff();
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      g(k) = std::exp(z(k) - m);
      sum += g(k);
    }
    g /= sum;
    g(y) -= 1.0;
    return g;
  }
  double dy = 0.0;
  for (int k = 0; k < c; ++k) {
    if (k == y) {
      g(k) = 0.0;
      continue;
    }
    double dk = detail::smooth_hinge_dpsi(1.0 + z(k) - z(y));
    g(k) = dk;
    dy -= dk;
  }
  g(y) = dy;
  return g;
}

// Chain rule through z = w^T x: the gradient with respect to the
// representation is w times the logit gradient.
inline Vector grad_input(const Matrix& w, const RowVector& gz) {
  if (w.cols() != gz.size()) throw std::invalid_argument("shape mismatch");
  return w * gz.transpose();
}

// Row i of the result is grad_logits at (logits.row(i), y[i]).
inline Matrix grad_logits_batch(LossKind kind, const Matrix& logits,
                                const std::vector<int>& y) {
  if (logits.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("label count mismatch");
  Matrix g(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i)
    g.row(i) = grad_logits(kind, logits.row(i), y[i]);
  return g;
}

inline double mean_loss(LossKind kind, const Matrix& logits,
                        const std::vector<int>& y) {
  if (logits.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("label count mismatch");
  if (logits.rows() == 0) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (int i = 0; i < logits.rows(); ++i)
    total += loss_value(kind, logits.row(i), y[i]);
  return total / static_cast<double>(logits.rows());
}

inline double max_loss(LossKind kind, const Matrix& logits,
                       const std::vector<int>& y) {
  if (logits.rows() == 0) throw std::invalid_argument("empty batch");
  double worst = 0.0;
  for (int i = 0; i < logits.rows(); ++i)
    worst = std::max(worst, loss_value(kind, logits.row(i), y[i]));
  return worst;
}

// (1/n) sum_i ||grad_logits_i||_2: the empirical L1 norm of the functional
// gradient of the unregularized risk.
inline double grad_norm_l1(LossKind kind, const Matrix& logits,
                           const std::vector<int>& y) {
  if (logits.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("label count mismatch");
  if (logits.rows() == 0) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (int i = 0; i < logits.rows(); ++i)
    total += grad_logits(kind, logits.row(i), y[i]).norm();
  return total / static_cast<double>(logits.rows());
}

// Loss at the zero logit vector; the largest value the regularized minimizer
// can attain, since w = 0 is always feasible.
inline double zero_logits_loss(LossKind kind, int c) {
  if (c < 2) throw std::invalid_argument("need at least two classes");
  if (kind == LossKind::logistic) return std::log(static_cast<double>(c));
  return 0.5 * static_cast<double>(c - 1);
}

// Spectral bound on the per-sample Hessian in logit space: 1/2 for logistic,
// c for the smoothed hinge (all c-1 margins active).
inline double hessian_bound(LossKind kind, int c) {
  if (c < 2) throw std::invalid_argument("need at least two classes");
  return kind == LossKind::logistic ? 0.5 : static_cast<double>(c);
}

// Any w with objective value <= loss-at-zero satisfies
// (lambda/2)||w||^2 <= zero_logits_loss, so the minimizer's Frobenius norm
// is bounded by sqrt(2 l0 / lambda).
inline double weight_norm_bound(LossKind kind, int c, double lambda) {
  if (lambda <= 0) throw std::invalid_argument("lambda must be positive");
  return std::sqrt(2.0 * zero_logits_loss(kind, c) / lambda);
}

}  // namespace resfgb
