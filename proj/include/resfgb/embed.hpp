#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "resfgb/common.hpp"

namespace resfgb {

struct EmbedConfig {
  std::vector<int> hidden{100, 100};
  int epochs = 10;
  int batch = 128;
  double lr = 1e-2;
  double momentum = 0.9;
  bool project_unit_ball = true;
  std::uint64_t seed = 0;
};

// Fully connected map with ReLU hidden units and an identity output layer.
// When project_unit_ball is set, inference output is radially projected onto
// the closed unit ball; training always sees the raw output.
class Embedding {
 public:
  std::vector<Matrix> w;  // w[l]: out x in
  std::vector<Vector> b;
  bool project_unit_ball = true;

  int in_dim() const { return static_cast<int>(w.front().cols()); }
  int out_dim() const { return static_cast<int>(w.back().rows()); }
  int layer_count() const { return static_cast<int>(w.size()); }

  Vector forward(const Vector& z) const {
    Vector a = raw_forward(z);
    if (project_unit_ball) {
      double nrm = a.norm();
      if (nrm > 1.0) a /= nrm;
    }
    return a;
  }

  // Row per sample. Row-parallel to the vector overload: every row performs
  // the same scalar operations as a single forward.
  Matrix forward(const Matrix& z) const {
    Matrix a = raw_forward(z);
    if (project_unit_ball) {
      for (int i = 0; i < a.rows(); ++i) {
        double nrm = a.row(i).norm();
        if (nrm > 1.0) a.row(i) /= nrm;
      }
    }
    return a;
  }

  Vector raw_forward(const Vector& z) const {
    if (z.size() != in_dim())
      throw std::invalid_argument("embedding input dimension mismatch");
    Vector a = z;
    for (std::size_t l = 0; l < w.size(); ++l) {
      a = (w[l] * a + b[l]).eval();
      if (l + 1 < w.size()) a = a.cwiseMax(0.0);
    }
    return a;
  }

  Matrix raw_forward(const Matrix& z) const {
    if (z.cols() != in_dim())
      throw std::invalid_argument("embedding input dimension mismatch");
    Matrix a = z;
    for (std::size_t l = 0; l < w.size(); ++l) {
      a = (a * w[l].transpose()).rowwise() + b[l].transpose();
      if (l + 1 < w.size()) a = a.cwiseMax(0.0);
    }
    return a;
  }
};

// Fan-in scaled uniform init: |entry| <= sqrt(6 / fan_in), biases zero.
// The output layer shrinks its bound by a further sqrt(fan_out) so the
// initial map starts at the scale of the unit-ball fit targets; without the
// shrink the first error signal on wide inputs is large enough to drive the
// hidden units dead and the fit collapses to the zero function.
// Deterministic in cfg.seed; entries are drawn row-major layer by layer.
inline Embedding init_embedding(int d, int out, const EmbedConfig& cfg) {
  if (d < 1 || out < 1) throw std::invalid_argument("bad embedding dims");
  for (int hsz : cfg.hidden)
    if (hsz < 1) throw std::invalid_argument("bad hidden width");
  Embedding e;
  e.project_unit_ball = cfg.project_unit_ball;
  std::vector<int> dims;
  dims.push_back(d);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(out);

  SplitMix64 rng(cfg.seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l];
    int fan_out = dims[l + 1];
    double bound = std::sqrt(6.0 / fan_in);
    if (l + 2 == dims.size()) bound /= std::sqrt(static_cast<double>(fan_out));
    Matrix wl(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) wl(r, c) = rng.next_uniform(-bound, bound);
    e.w.push_back(std::move(wl));
    e.b.push_back(Vector::Zero(fan_out));
  }
  return e;
}

struct EmbedFitStats {
  double initial_mse = 0.0;  // before any update
  double final_mse = 0.0;    // best full-data value seen
  int epochs_run = 0;
};

namespace detail {

// Batch MSE (mean over rows of the squared output error) and its parameter
// gradients. No output projection: training optimizes the raw map.
inline double embed_mse_and_grads(const Embedding& e, const Matrix& z,
                                  const Matrix& targets,
                                  std::vector<Matrix>* gw,
                                  std::vector<Vector>* gb) {
  const int m = static_cast<int>(z.rows());
  const std::size_t layers = e.w.size();
  std::vector<Matrix> acts(layers + 1);
  acts[0] = z;
  for (std::size_t l = 0; l < layers; ++l) {
    acts[l + 1] = (acts[l] * e.w[l].transpose()).rowwise() + e.b[l].transpose();
    if (l + 1 < layers) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }
  Matrix diff = acts[layers] - targets;
  double mse = diff.squaredNorm() / m;
  if (gw == nullptr) return mse;

  gw->resize(layers);
  gb->resize(layers);
  Matrix delta = 2.0 * diff / m;
  for (std::size_t l = layers; l-- > 0;) {
    (*gw)[l] = delta.transpose() * acts[l];
    (*gb)[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * e.w[l]).cwiseProduct(
          (acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return mse;
}

inline double embed_full_mse(const Embedding& e, const Matrix& z,
                             const Matrix& targets) {
  return embed_mse_and_grads(e, z, targets, nullptr, nullptr);
}

}  // namespace detail

// Mini-batch SGD with Nesterov momentum on the squared error to the target
// rows. Batches are drawn by a seeded shuffle each epoch; the returned
// parameters are the best full-data iterate seen (never worse than the
// initial ones). Target rows must lie in the unit ball.
inline EmbedFitStats fit_to_targets(Embedding& e, const Matrix& z,
                                    const Matrix& targets,
                                    const EmbedConfig& cfg) {
  const int n = static_cast<int>(z.rows());
  if (n < 1) throw std::invalid_argument("empty embedding batch");
  if (targets.rows() != n || targets.cols() != e.out_dim() ||
      z.cols() != e.in_dim())
    throw std::invalid_argument("embedding target shape mismatch");
  if (cfg.epochs < 0 || cfg.batch < 1 || cfg.lr <= 0)
    throw std::invalid_argument("bad embedding fit config");
  for (int i = 0; i < n; ++i) {
    if (targets.row(i).norm() > 1.0 + 1e-9)
      throw std::invalid_argument("embedding target outside unit ball");
  }

  EmbedFitStats stats;
  stats.initial_mse = detail::embed_full_mse(e, z, targets);
  stats.final_mse = stats.initial_mse;

  std::vector<Matrix> best_w = e.w;
  std::vector<Vector> best_b = e.b;

  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  for (std::size_t l = 0; l < e.w.size(); ++l) {
    vel_w.push_back(Matrix::Zero(e.w[l].rows(), e.w[l].cols()));
    vel_b.push_back(Vector::Zero(e.b[l].size()));
  }

  const int batch = std::min(cfg.batch, n);
  // Shuffle stream is distinct from the init stream even for equal seeds.
  SplitMix64 rng(~cfg.seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  Embedding look = e;  // lookahead point theta + mu * velocity
  std::vector<Matrix> gw;
  std::vector<Vector> gb;
  Matrix zb(batch, z.cols());
  Matrix tb(batch, targets.cols());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (int start = 0; start < n; start += batch) {
      int m = std::min(batch, n - start);
      if (zb.rows() != m) {
        zb.resize(m, z.cols());
        tb.resize(m, targets.cols());
      }
      for (int i = 0; i < m; ++i) {
        zb.row(i) = z.row(order[start + i]);
        tb.row(i) = targets.row(order[start + i]);
      }
      for (std::size_t l = 0; l < e.w.size(); ++l) {
        look.w[l] = e.w[l] + cfg.momentum * vel_w[l];
        look.b[l] = e.b[l] + cfg.momentum * vel_b[l];
      }
      double mse = detail::embed_mse_and_grads(look, zb, tb, &gw, &gb);
      if (!std::isfinite(mse))
        throw std::runtime_error("embedding training diverged (loss not finite) at epoch " +
                                 std::to_string(epoch));
      for (std::size_t l = 0; l < e.w.size(); ++l) {
        vel_w[l] = cfg.momentum * vel_w[l] - cfg.lr * gw[l];
        vel_b[l] = cfg.momentum * vel_b[l] - cfg.lr * gb[l];
        e.w[l] += vel_w[l];
        e.b[l] += vel_b[l];
      }
    }
    double full = detail::embed_full_mse(e, z, targets);
    if (!std::isfinite(full))
      throw std::runtime_error("embedding training diverged (loss not finite) at epoch " +
                               std::to_string(epoch));
    if (full < stats.final_mse) {
      stats.final_mse = full;
      best_w = e.w;
      best_b = e.b;
    }
    stats.epochs_run = epoch;
  }

  e.w = std::move(best_w);
  e.b = std::move(best_b);
  return stats;
}

// Test fixture: an exact lookup over known representation rows. Stands in
// for a trained embedding where the smoothed-gradient algebra needs the
// normalized gradient rows themselves as embedded values.
class OracleEmbedding {
 public:
  OracleEmbedding(Matrix keys, Matrix values)
      : keys_(std::move(keys)), values_(std::move(values)) {
    if (keys_.rows() != values_.rows())
      throw std::invalid_argument("oracle rows mismatch");
  }

  Vector forward(const Vector& z) const {
    for (int i = 0; i < keys_.rows(); ++i) {
      if ((keys_.row(i).transpose().array() == z.array()).all())
        return values_.row(i).transpose();
    }
    throw std::runtime_error("oracle embedding queried off the training rows");
  }

  Matrix forward(const Matrix& z) const {
    Matrix out(z.rows(), values_.cols());
    for (int i = 0; i < z.rows(); ++i)
      out.row(i) = forward(Vector(z.row(i).transpose())).transpose();
    return out;
  }

 private:
  Matrix keys_;
  Matrix values_;
};

}  // namespace resfgb
