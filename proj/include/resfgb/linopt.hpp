#pragma once

#include <cmath>
#include <vector>

#include "resfgb/common.hpp"
#include "resfgb/loss.hpp"

namespace resfgb {

struct LinearModel {
  Matrix w;  // d x c
  LossKind kind = LossKind::logistic;
  double lambda = 0.0;
};

struct SolverConfig {
  double tol = -1.0;      // <0: use 1e-7 * max(1, loss at zero logits)
  int max_epochs = 2000;
  double step = 0.0;      // <=0: 1 / (hessian_bound * sigma_max(Z)^2 / n + lambda)
  int power_iters = 50;
};

struct FitResult {
  LinearModel model;
  bool converged = false;
  int epochs = 0;
  double grad_norm = 0.0;
  double objective = 0.0;
};

// Ridge-regularized empirical risk: (1/n) sum l(w^T z_i, y_i) + (lambda/2)||w||_F^2.
inline double objective(const Matrix& z, const std::vector<int>& y, int c,
                        const Matrix& w, double lambda, LossKind kind) {
  if (w.rows() != z.cols() || w.cols() != c)
    throw std::invalid_argument("weight shape mismatch");
  Matrix logits = z * w;
  return mean_loss(kind, logits, y) + 0.5 * lambda * w.squaredNorm();
}

inline Matrix grad_w(const Matrix& z, const std::vector<int>& y, int c,
                     const Matrix& w, double lambda, LossKind kind) {
  if (w.rows() != z.cols() || w.cols() != c)
    throw std::invalid_argument("weight shape mismatch");
  Matrix logits = z * w;
  Matrix g = grad_logits_batch(kind, logits, y);
  return z.transpose() * g / static_cast<double>(z.rows()) + lambda * w;
}

namespace detail {

// Largest singular value of z by 50 rounds of power iteration on z^T z,
// started from a fixed pseudo-random vector. The estimate can only come in
// low, so callers pad it before using it as a Lipschitz constant.
inline double sigma_max_estimate(const Matrix& z, int iters) {
  const int d = static_cast<int>(z.cols());
  SplitMix64 rng(0x5ca1ab1eull);
  Vector v(d);
  for (int j = 0; j < d; ++j) v(j) = rng.next_uniform(-1.0, 1.0);
  double nrm = v.norm();
  if (nrm == 0.0) return 0.0;
  v /= nrm;
  double sigma2 = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector u = z.transpose() * (z * v);
    double un = u.norm();
    if (un == 0.0) return 0.0;
    sigma2 = v.dot(u);  // Rayleigh quotient for z^T z
    v = u / un;
  }
  return std::sqrt(std::max(sigma2, 0.0));
}

struct Eval {
  double obj;
  Matrix grad;
};

inline Eval eval_point(const Matrix& z, const std::vector<int>& y, int c,
                       const Matrix& w, double lambda, LossKind kind) {
  Matrix logits = z * w;
  Eval e;
  e.obj = mean_loss(kind, logits, y) + 0.5 * lambda * w.squaredNorm();
  Matrix g = grad_logits_batch(kind, logits, y);
  e.grad = z.transpose() * g / static_cast<double>(z.rows()) + lambda * w;
  return e;
}

}  // namespace detail

// Accelerated gradient descent with adaptive restarts. Restarting on both an
// objective increase and the gradient test keeps the accepted trajectory
// monotone, so the best iterate is always the last one. A failed plain step
// falls back to step halving (possible only if the Lipschitz estimate was
// low).
inline FitResult fit_linear(const Matrix& z, const std::vector<int>& y, int c,
                            LossKind kind, double lambda,
                            const SolverConfig& cfg = {},
                            const Matrix* warm_start = nullptr) {
  const int n = static_cast<int>(z.rows());
  const int d = static_cast<int>(z.cols());
  if (n < 1) throw std::invalid_argument("empty training set");
  if (c < 2) throw std::invalid_argument("need at least two classes");
  if (lambda <= 0) throw std::invalid_argument("lambda must be positive");

  double tol = cfg.tol > 0
                   ? cfg.tol
                   : 1e-7 * std::max(1.0, zero_logits_loss(kind, c));
  double h = cfg.step;
  if (h <= 0) {
    double sigma = detail::sigma_max_estimate(z, cfg.power_iters);
    double lip = 1.01 * hessian_bound(kind, c) * sigma * sigma / n + lambda;
    h = 1.0 / lip;
  }

  Matrix w = warm_start ? *warm_start : Matrix::Zero(d, c);
  if (w.rows() != d || w.cols() != c)
    throw std::invalid_argument("warm start shape mismatch");

  detail::Eval cur = detail::eval_point(z, y, c, w, lambda, kind);
  FitResult res;
  if (cur.grad.norm() <= tol) {
    res.model = {w, kind, lambda};
    res.converged = true;
    res.grad_norm = cur.grad.norm();
    res.objective = cur.obj;
    return res;
  }

  Matrix v = w;
  double t = 1.0;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    detail::Eval at_v = detail::eval_point(z, y, c, v, lambda, kind);
    Matrix w_new = v - h * at_v.grad;
    detail::Eval next = detail::eval_point(z, y, c, w_new, lambda, kind);

    bool momentum_failed = next.obj > cur.obj;
    if (momentum_failed) {
      t = 1.0;
      double step = h;
      for (int tries = 0; tries < 64; ++tries) {
        w_new = w - step * cur.grad;
        next = detail::eval_point(z, y, c, w_new, lambda, kind);
        if (next.obj <= cur.obj) break;
        step *= 0.5;
      }
      if (next.obj > cur.obj) break;  // cannot make progress at any step
      v = w_new;
    } else {
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      v = w_new + ((t - 1.0) / t_next) * (w_new - w);
      // gradient restart: momentum points against the last move
      if ((at_v.grad.array() * (w_new - w).array()).sum() > 0.0) {
        t = 1.0;
        v = w_new;
      } else {
        t = t_next;
      }
    }

    w = w_new;
    cur = next;
    if (cur.grad.norm() <= tol) {
      ++epoch;
      break;
    }
  }

  res.model = {w, kind, lambda};
  res.grad_norm = cur.grad.norm();
  res.objective = cur.obj;
  res.epochs = epoch;
  res.converged = res.grad_norm <= tol;
  return res;
}

}  // namespace resfgb
