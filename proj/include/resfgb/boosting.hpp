#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "resfgb/dataio.hpp"
#include "resfgb/embed.hpp"
#include "resfgb/linopt.hpp"
#include "resfgb/loss.hpp"

namespace resfgb {

enum class TrainMode { standard, sample_split };

struct TrainConfig {
  int layers = 20;
  int t0 = -1;  // refit horizon; <0 means refit the linear head every round
  double eta = 0.1;
  std::optional<double> eta2;  // second-half step size, if set
  double lambda = 1e-2;
  LossKind loss = LossKind::logistic;
  EmbedConfig embed;
  SolverConfig solver;
  double valid_fraction = 0.2;
  int patience = 10;  // <=0 disables early stopping
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::standard;
  bool standardize = true;
  std::function<void(const std::string&)> warn;  // defaults to stderr
};

// One residual block: z -> z - eta * a * iota(z).
struct ResidualLayer {
  Matrix a;  // d x D
  double eta = 0.0;
  Embedding embed;
};

struct ResFGBModel {
  std::optional<Standardizer> standardizer;
  std::vector<ResidualLayer> layers;
  Matrix w;  // linear head, d x c
  LossKind kind = LossKind::logistic;
  double lambda = 0.0;
  int c = 0;
  std::vector<long long> label_map;
  TrainConfig config;  // echo of the training configuration
  int selected_round = 0;
  double best_valid_acc = std::numeric_limits<double>::quiet_NaN();
};

// Snapshot of the candidate model at the start of round `round` (its layer
// prefix plus the linear head paired with it), with that round's embedding
// diagnostics.
struct RoundRecord {
  int round = 0;
  double train_risk = 0.0;
  double grad_norm_l1 = 0.0;
  double train_acc = 0.0;
  double valid_acc = std::numeric_limits<double>::quiet_NaN();
  double embed_mse = 0.0;
  double k_bound = 0.0;    // max squared embedded norm this round
  double sigma_min = 0.0;  // smallest eigenvalue of w^T w
  double wall_ms = 0.0;
};

struct TrainResult {
  ResFGBModel model;
  std::vector<RoundRecord> history;
  std::vector<Matrix> round_weights;      // linear head per candidate prefix
  std::vector<std::vector<int>> subsets;  // sample-split partition (train-portion rows)
  int rounds_completed = 0;
  int selected_round = 0;
  double final_train_acc = 0.0;
  double final_valid_acc = std::numeric_limits<double>::quiet_NaN();
};

inline double accuracy(const Matrix& logits, const std::vector<int>& y) {
  if (logits.rows() == 0) throw std::invalid_argument("empty batch");
  int hits = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    RowVector r = logits.row(i);
    if (argmax_index(r) == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

// Row i is the gradient of the sample loss with respect to its
// representation: w * dl/dlogits. Equals grad_logits_batch * w^T.
inline Matrix per_sample_gradients(LossKind kind, const Matrix& z,
                                   const std::vector<int>& y, const Matrix& w) {
  Matrix logits = z * w;
  return grad_logits_batch(kind, logits, y) * w.transpose();
}

// A = (1/n) G^T E compresses the smoothed functional gradient: the update
// direction at any point x is A * iota(z(x)).
inline ResidualLayer build_layer(const Matrix& g, const Matrix& e, double eta,
                                 Embedding embed) {
  if (g.rows() != e.rows()) throw std::invalid_argument("row count mismatch");
  if (g.rows() == 0) throw std::invalid_argument("empty batch");
  ResidualLayer layer;
  layer.a = g.transpose() * e / static_cast<double>(g.rows());
  layer.eta = eta;
  layer.embed = std::move(embed);
  return layer;
}

inline Vector apply_layer(const ResidualLayer& layer, const Vector& z) {
  return z - layer.eta * (layer.a * layer.embed.forward(z));
}

namespace detail {

inline void emit_warning(const TrainConfig& cfg, const std::string& msg) {
  if (cfg.warn) {
    cfg.warn(msg);
  } else {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
}

inline double eta_for_round(const TrainConfig& cfg, int t) {
  if (cfg.eta2 && t >= (cfg.layers + 1) / 2) return *cfg.eta2;
  return cfg.eta;
}

inline double max_row_sq_norm(const Matrix& m) {
  double best = 0.0;
  for (int i = 0; i < m.rows(); ++i)
    best = std::max(best, m.row(i).squaredNorm());
  return best;
}

inline double min_eig_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  return es.eigenvalues().minCoeff();
}

inline void validate_train_config(const Dataset& ds, const TrainConfig& cfg) {
  if (ds.n() < 1) throw std::invalid_argument("empty dataset");
  if (ds.c < 2) throw std::invalid_argument("training needs at least two classes");
  if (cfg.layers < 0) throw std::invalid_argument("layers must be >= 0");
  if (cfg.layers > 0 && cfg.eta <= 0) throw std::invalid_argument("eta must be positive");
  if (cfg.eta2 && *cfg.eta2 <= 0) throw std::invalid_argument("eta2 must be positive");
  if (cfg.lambda <= 0) throw std::invalid_argument("lambda must be positive");
  if (cfg.valid_fraction < 0 || cfg.valid_fraction >= 1)
    throw std::invalid_argument("valid_fraction must be in [0, 1)");
}

// Normalized gradient rows; rows with negligible norm become zero targets.
inline Matrix gradient_targets(const Matrix& g) {
  Matrix t = g;
  for (int i = 0; i < t.rows(); ++i) {
    double nrm = t.row(i).norm();
    if (nrm > 1e-12)
      t.row(i) /= nrm;
    else
      t.row(i).setZero();
  }
  return t;
}

struct CandidateTracker {
  bool enabled = false;
  int patience = 0;
  double best = -std::numeric_limits<double>::infinity();
  int best_round = 0;
  int stale = 0;

  // Returns true when training should halt before completing this round.
  bool observe(int round, double valid_acc) {
    if (!enabled) return false;
    if (valid_acc > best) {
      best = valid_acc;
      best_round = round;
      stale = 0;
    } else {
      ++stale;
    }
    return patience > 0 && stale >= patience;
  }
};

}  // namespace detail

// Gradient-boosted residual representation. Each round refits (or reuses)
// the linear head on the cached representations, fits an embedding to the
// normalized per-sample gradients, compresses the smoothed gradient into a
// residual layer, and walks all cached representations one step. Validation
// accuracy picks the returned prefix.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::standard)
    throw std::invalid_argument("train() handles standard mode only");
  detail::validate_train_config(ds, cfg);

  SplitMix64 master(cfg.seed);
  const std::uint64_t split_seed = master.next();

  auto [tr, va] = split_train_valid(ds, {cfg.valid_fraction, split_seed});
  const bool has_valid = !va.empty();
  const int T = cfg.layers;
  const int t0_eff = cfg.t0 < 0 ? T : cfg.t0;

  TrainResult res;
  res.model.kind = cfg.loss;
  res.model.lambda = cfg.lambda;
  res.model.c = ds.c;
  res.model.label_map = ds.label_map;
  res.model.config = cfg;

  Matrix z, zv;
  if (cfg.standardize) {
    res.model.standardizer = fit_standardizer(tr.x);
    z = res.model.standardizer->transform(tr.x);
    if (has_valid) zv = res.model.standardizer->transform(va.x);
  } else {
    z = tr.x;
    if (has_valid) zv = va.x;
  }

  const double eta_guard_denom =
      hessian_bound(cfg.loss, ds.c) *
      weight_norm_bound(cfg.loss, ds.c, cfg.lambda) *
      weight_norm_bound(cfg.loss, ds.c, cfg.lambda);

  detail::CandidateTracker tracker;
  tracker.enabled = has_valid;
  tracker.patience = cfg.patience;

  std::vector<ResidualLayer> layers;
  Matrix w;
  bool stopped_early = false;

  for (int t = 0; t < T; ++t) {
    auto tick = std::chrono::steady_clock::now();

    if (t == 0 || t < t0_eff) {
      FitResult fit = fit_linear(z, tr.y, ds.c, cfg.loss, cfg.lambda,
                                 cfg.solver, t == 0 ? nullptr : &w);
      if (!fit.converged)
        detail::emit_warning(
            cfg, "round " + std::to_string(t) +
                     ": linear solver stopped at gradient norm " +
                     fmt17(fit.grad_norm));
      w = fit.model.w;
    }
    res.round_weights.push_back(w);

    Matrix logits = z * w;
    RoundRecord rec;
    rec.round = t;
    rec.train_risk = mean_loss(cfg.loss, logits, tr.y) +
                     0.5 * cfg.lambda * w.squaredNorm();
    rec.grad_norm_l1 = grad_norm_l1(cfg.loss, logits, tr.y);
    rec.train_acc = accuracy(logits, tr.y);
    if (has_valid) rec.valid_acc = accuracy(zv * w, va.y);

    if (tracker.observe(t, rec.valid_acc)) {
      stopped_early = true;
      break;
    }

    const std::uint64_t embed_seed = master.next();
    Matrix g = grad_logits_batch(cfg.loss, logits, tr.y) * w.transpose();
    Matrix targets = detail::gradient_targets(g);

    EmbedConfig ecfg = cfg.embed;
    ecfg.seed = embed_seed;
    Embedding emb = init_embedding(tr.d(), tr.d(), ecfg);
    EmbedFitStats stats = fit_to_targets(emb, z, targets, ecfg);
    rec.embed_mse = stats.final_mse;

    Matrix e = emb.forward(z);
    const double eta_t = detail::eta_for_round(cfg, t);
    ResidualLayer layer = build_layer(g, e, eta_t, std::move(emb));

    rec.k_bound = detail::max_row_sq_norm(e);
    if (rec.k_bound > 0 && eta_t > 1.0 / (eta_guard_denom * rec.k_bound))
      detail::emit_warning(
          cfg, "round " + std::to_string(t) + ": eta " + fmt17(eta_t) +
                   " exceeds the descent guard " +
                   fmt17(1.0 / (eta_guard_denom * rec.k_bound)));
    rec.sigma_min = detail::min_eig_sym(w.transpose() * w);

    z -= eta_t * e * layer.a.transpose();
    if (!z.allFinite())
      throw std::runtime_error("representations diverged at round " +
                               std::to_string(t));
    if (has_valid) {
      Matrix ev = layer.embed.forward(zv);
      zv -= eta_t * ev * layer.a.transpose();
      if (!zv.allFinite())
        throw std::runtime_error("validation representations diverged at round " +
                                 std::to_string(t));
    }

    layers.push_back(std::move(layer));
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - tick)
                      .count();
    res.history.push_back(rec);
  }

  res.rounds_completed = static_cast<int>(res.history.size());

  int selected;
  double final_tracc;
  double final_vacc = std::numeric_limits<double>::quiet_NaN();
  if (stopped_early) {
    selected = tracker.best_round;
    final_tracc = res.history[selected].train_acc;
    final_vacc = res.history[selected].valid_acc;
  } else {
    // Refit the head on the final representation; that defines the last
    // candidate prefix.
    FitResult fit = fit_linear(z, tr.y, ds.c, cfg.loss, cfg.lambda, cfg.solver,
                               T > 0 ? &w : nullptr);
    if (!fit.converged)
      detail::emit_warning(cfg,
                           "final refit stopped at gradient norm " +
                               fmt17(fit.grad_norm));
    w = fit.model.w;
    res.round_weights.push_back(w);
    double tracc = accuracy(z * w, tr.y);
    double vacc = has_valid ? accuracy(zv * w, va.y)
                            : std::numeric_limits<double>::quiet_NaN();
    if (has_valid) {
      tracker.observe(T, vacc);
      selected = tracker.best_round;
      final_vacc = tracker.best;
      final_tracc = selected == T ? tracc : res.history[selected].train_acc;
    } else {
      selected = T;
      final_tracc = tracc;
    }
  }

  layers.resize(selected);
  res.model.layers = std::move(layers);
  res.model.w = res.round_weights[selected];
  res.model.selected_round = selected;
  res.model.best_valid_acc = final_vacc;
  res.selected_round = selected;
  res.final_train_acc = final_tracc;
  res.final_valid_acc = final_vacc;
  return res;
}

// Sample-splitting variant: the training portion is partitioned into
// `layers` disjoint subsets of equal size floor(n/T); round t estimates its
// gradients, embedding, and layer from subset t alone, and the linear head
// fit on subset 0 is never refit. Leftover samples train nothing.
inline TrainResult train_sample_split(const Dataset& ds, const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::sample_split)
    throw std::invalid_argument("train_sample_split() handles sample-split mode only");
  detail::validate_train_config(ds, cfg);
  const int T = cfg.layers;
  if (T < 1) throw std::invalid_argument("sample-split needs at least one round");
  if (cfg.t0 > 0)
    detail::emit_warning(cfg, "sample-split mode ignores t0; the head is fit once");

  SplitMix64 master(cfg.seed);
  const std::uint64_t split_seed = master.next();
  const std::uint64_t partition_seed = master.next();

  auto [tr, va] = split_train_valid(ds, {cfg.valid_fraction, split_seed});
  const bool has_valid = !va.empty();
  const int n = tr.n();
  const int m = n / T;
  if (m < 1) throw std::invalid_argument("more rounds than training samples");

  TrainResult res;
  res.model.kind = cfg.loss;
  res.model.lambda = cfg.lambda;
  res.model.c = ds.c;
  res.model.label_map = ds.label_map;
  res.model.config = cfg;

  Matrix z, zv;
  if (cfg.standardize) {
    res.model.standardizer = fit_standardizer(tr.x);
    z = res.model.standardizer->transform(tr.x);
    if (has_valid) zv = res.model.standardizer->transform(va.x);
  } else {
    z = tr.x;
    if (has_valid) zv = va.x;
  }

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  SplitMix64 prng(partition_seed);
  shuffle_in_place(perm, prng);
  for (int t = 0; t < T; ++t)
    res.subsets.emplace_back(perm.begin() + t * m, perm.begin() + (t + 1) * m);

  auto gather = [&](const std::vector<int>& idx, const Matrix& src,
                    const std::vector<int>& labels, std::vector<int>& out_y) {
    Matrix out(static_cast<int>(idx.size()), src.cols());
    out_y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.row(static_cast<int>(i)) = src.row(idx[i]);
      out_y[i] = labels[idx[i]];
    }
    return out;
  };

  // Head fit once, on the first subset's standardized raw representation.
  std::vector<int> y0;
  Matrix z0 = gather(res.subsets[0], z, tr.y, y0);
  FitResult fit = fit_linear(z0, y0, ds.c, cfg.loss, cfg.lambda, cfg.solver);
  if (!fit.converged)
    detail::emit_warning(cfg, "head fit stopped at gradient norm " +
                                  fmt17(fit.grad_norm));
  const Matrix w = fit.model.w;
  const double sigma_min = detail::min_eig_sym(w.transpose() * w);

  const double eta_guard_denom =
      hessian_bound(cfg.loss, ds.c) *
      weight_norm_bound(cfg.loss, ds.c, cfg.lambda) *
      weight_norm_bound(cfg.loss, ds.c, cfg.lambda);

  detail::CandidateTracker tracker;
  tracker.enabled = has_valid;
  tracker.patience = cfg.patience;

  std::vector<ResidualLayer> layers;
  bool stopped_early = false;

  for (int t = 0; t < T; ++t) {
    auto tick = std::chrono::steady_clock::now();
    res.round_weights.push_back(w);

    Matrix logits = z * w;
    RoundRecord rec;
    rec.round = t;
    rec.train_risk = mean_loss(cfg.loss, logits, tr.y) +
                     0.5 * cfg.lambda * w.squaredNorm();
    rec.grad_norm_l1 = grad_norm_l1(cfg.loss, logits, tr.y);
    rec.train_acc = accuracy(logits, tr.y);
    if (has_valid) rec.valid_acc = accuracy(zv * w, va.y);
    rec.sigma_min = sigma_min;

    if (tracker.observe(t, rec.valid_acc)) {
      stopped_early = true;
      break;
    }

    const std::uint64_t embed_seed = master.next();
    std::vector<int> ys;
    Matrix zs = gather(res.subsets[t], z, tr.y, ys);
    Matrix gs = per_sample_gradients(cfg.loss, zs, ys, w);
    Matrix targets = detail::gradient_targets(gs);

    EmbedConfig ecfg = cfg.embed;
    ecfg.seed = embed_seed;
    Embedding emb = init_embedding(tr.d(), tr.d(), ecfg);
    EmbedFitStats stats = fit_to_targets(emb, zs, targets, ecfg);
    rec.embed_mse = stats.final_mse;

    Matrix es = emb.forward(zs);
    const double eta_t = detail::eta_for_round(cfg, t);
    ResidualLayer layer = build_layer(gs, es, eta_t, std::move(emb));

    Matrix e_full = layer.embed.forward(z);
    rec.k_bound = detail::max_row_sq_norm(e_full);
    if (rec.k_bound > 0 && eta_t > 1.0 / (eta_guard_denom * rec.k_bound))
      detail::emit_warning(
          cfg, "round " + std::to_string(t) + ": eta " + fmt17(eta_t) +
                   " exceeds the descent guard " +
                   fmt17(1.0 / (eta_guard_denom * rec.k_bound)));

    z -= eta_t * e_full * layer.a.transpose();
    if (!z.allFinite())
      throw std::runtime_error("representations diverged at round " +
                               std::to_string(t));
    if (has_valid) {
      Matrix ev = layer.embed.forward(zv);
      zv -= eta_t * ev * layer.a.transpose();
      if (!zv.allFinite())
        throw std::runtime_error("validation representations diverged at round " +
                                 std::to_string(t));
    }

    layers.push_back(std::move(layer));
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - tick)
                      .count();
    res.history.push_back(rec);
  }

  res.rounds_completed = static_cast<int>(res.history.size());

  int selected;
  double final_tracc;
  double final_vacc = std::numeric_limits<double>::quiet_NaN();
  if (stopped_early) {
    selected = tracker.best_round;
    final_tracc = res.history[selected].train_acc;
    final_vacc = res.history[selected].valid_acc;
  } else {
    res.round_weights.push_back(w);  // final candidate, same head
    double tracc = accuracy(z * w, tr.y);
    double vacc = has_valid ? accuracy(zv * w, va.y)
                            : std::numeric_limits<double>::quiet_NaN();
    if (has_valid) {
      tracker.observe(T, vacc);
      selected = tracker.best_round;
      final_vacc = tracker.best;
      final_tracc = selected == T ? tracc : res.history[selected].train_acc;
    } else {
      selected = T;
      final_tracc = tracc;
    }
  }

  layers.resize(selected);
  res.model.layers = std::move(layers);
  res.model.w = res.round_weights[selected];
  res.model.selected_round = selected;
  res.model.best_valid_acc = final_vacc;
  res.selected_round = selected;
  res.final_train_acc = final_tracc;
  res.final_valid_acc = final_vacc;
  return res;
}

inline Vector predict_logits(const ResFGBModel& model, const Vector& x) {
  // Layers preserve dimension, so the head's row count is the input width.
  if (x.size() != model.w.rows())
    throw std::invalid_argument("input dimension mismatch");
  Vector z = model.standardizer ? model.standardizer->transform(x) : x;
  for (const auto& layer : model.layers) z = apply_layer(layer, z);
  return model.w.transpose() * z;
}

// Row-by-row on purpose: batch output is defined as n independent single
// predictions, exactly.
inline Matrix predict_logits(const ResFGBModel& model, const Matrix& x) {
  Matrix out(x.rows(), model.c);
  for (int i = 0; i < x.rows(); ++i)
    out.row(i) = predict_logits(model, Vector(x.row(i).transpose())).transpose();
  return out;
}

inline long long predict_label(const ResFGBModel& model, const Vector& x) {
  Vector logits = predict_logits(model, x);
  RowVector r = logits.transpose();
  return model.label_map[argmax_index(r)];
}

}  // namespace resfgb
