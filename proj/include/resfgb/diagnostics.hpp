#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "resfgb/boosting.hpp"
#include "resfgb/dataio.hpp"
#include "resfgb/loss.hpp"

namespace resfgb {

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;  // lhs <= rhs + 1e-9
  double slack = 0.0;  // rhs - lhs
};

inline double margin(const RowVector& logits, int y) {
  if (y < 0 || y >= logits.size()) throw std::invalid_argument("label out of range");
  double rival = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < logits.size(); ++j)
    if (j != y) rival = std::max(rival, logits(j));
  return logits(y) - rival;
}

// Fraction of samples whose margin is at most delta.
inline double margin_fraction(const Matrix& logits, const std::vector<int>& y,
                              double delta) {
  if (logits.rows() == 0) throw std::invalid_argument("empty batch");
  int hits = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    RowVector r = logits.row(i);
    if (margin(r, y[i]) <= delta) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

namespace detail {

inline Vector softmax(const Vector& z) {
  Vector p = (z.array() - z.maxCoeff()).exp();
  return p / p.sum();
}

// Inputs collapsed by identical feature bytes. `nu` is the empirical label
// distribution within the group, `p` the model's softmax at that point.
struct InputGroup {
  double weight = 0.0;  // n_g / n
  Vector p;
  Vector nu;
};

inline std::vector<InputGroup> group_by_input(const ResFGBModel& model,
                                              const Dataset& ds) {
  if (ds.n() == 0) throw std::invalid_argument("empty dataset");
  std::unordered_map<std::string, int> index;
  std::vector<InputGroup> groups;
  std::vector<Vector> reps;
  const int n = ds.n();
  for (int i = 0; i < n; ++i) {
    Vector row = ds.x.row(i).transpose();
    std::string key(reinterpret_cast<const char*>(row.data()),
                    sizeof(double) * static_cast<std::size_t>(row.size()));
    auto [it, fresh] = index.try_emplace(key, static_cast<int>(groups.size()));
    if (fresh) {
      groups.push_back({0.0, Vector(), Vector::Zero(model.c)});
      reps.push_back(std::move(row));
    }
    InputGroup& g = groups[it->second];
    g.weight += 1.0 / n;
    if (ds.y[i] < 0 || ds.y[i] >= model.c)
      throw std::invalid_argument("label out of range");
    g.nu(ds.y[i]) += 1.0;
  }
  for (std::size_t k = 0; k < groups.size(); ++k) {
    groups[k].nu /= groups[k].nu.sum();
    groups[k].p = softmax(predict_logits(model, reps[k]));
  }
  return groups;
}

// L1(c) norm of the functional-risk gradient under the empirical input
// measure. With the logistic loss the gradient at a repeated input averages
// to softmax minus the empirical label distribution.
inline double grouped_gradient_norm(const std::vector<InputGroup>& groups) {
  double s = 0.0;
  for (const auto& g : groups) s += g.weight * (g.p - g.nu).norm();
  return s;
}

inline void require_logistic(const ResFGBModel& model) {
  if (model.kind != LossKind::logistic)
    throw std::invalid_argument("bound diagnostics apply to the logistic loss");
}

inline BoundReport make_report(std::string name, double lhs, double rhs) {
  BoundReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.holds = lhs <= rhs + 1e-9;
  r.slack = rhs - lhs;
  return r;
}

}  // namespace detail

// Total variation between the empirical conditional label distribution and
// the model's softmax, scaled by 1/sqrt(c), never exceeds the gradient norm.
inline BoundReport check_consistency_bound(const ResFGBModel& model,
                                           const Dataset& ds) {
  detail::require_logistic(model);
  auto groups = detail::group_by_input(model, ds);
  double lhs = 0.0;
  for (const auto& g : groups)
    lhs += g.weight * (g.p - g.nu).lpNorm<1>();
  lhs /= std::sqrt(static_cast<double>(model.c));
  return detail::make_report("consistency", lhs, detail::grouped_gradient_norm(groups));
}

// The fraction of samples with margin at most delta is controlled by
// (1 + e^delta) * sqrt(c) times the gradient norm.
inline BoundReport check_margin_bound(const ResFGBModel& model, const Dataset& ds,
                                      double delta) {
  detail::require_logistic(model);
  if (delta < 0) throw std::invalid_argument("delta must be >= 0");
  auto groups = detail::group_by_input(model, ds);
  Matrix logits = predict_logits(model, ds.x);
  double lhs = margin_fraction(logits, ds.y, delta);
  double rhs = (1.0 + std::exp(delta)) *
               std::sqrt(static_cast<double>(model.c)) *
               detail::grouped_gradient_norm(groups);
  return detail::make_report("margin", lhs, rhs);
}

// Mean loss scaled by (1 - e^-M) / (sqrt(c) * M), M the worst sample loss,
// never exceeds the gradient norm.
inline BoundReport check_risk_gap_bound(const ResFGBModel& model,
                                        const Dataset& ds) {
  detail::require_logistic(model);
  auto groups = detail::group_by_input(model, ds);
  Matrix logits = predict_logits(model, ds.x);
  double risk = mean_loss(model.kind, logits, ds.y);
  double m = max_loss(model.kind, logits, ds.y);
  double lhs = m > 0 ? -std::expm1(-m) / (std::sqrt(static_cast<double>(model.c)) * m) * risk
                     : 0.0;
  return detail::make_report("risk_gap", lhs, detail::grouped_gradient_norm(groups));
}

inline std::string report_line(const BoundReport& r) {
  return r.name + " lhs=" + fmt17(r.lhs) + " rhs=" + fmt17(r.rhs) +
         " holds=" + (r.holds ? "true" : "false") + " slack=" + fmt17(r.slack);
}

inline std::string reports_json(const std::vector<BoundReport>& reports) {
  std::string out = "[";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0) out += ",";
    out += "{\"name\":\"" + reports[i].name + "\",\"lhs\":" + fmt17(reports[i].lhs) +
           ",\"rhs\":" + fmt17(reports[i].rhs) +
           ",\"holds\":" + (reports[i].holds ? "true" : "false") +
           ",\"slack\":" + fmt17(reports[i].slack) + "}";
  }
  return out + "]";
}

inline void emit_history(const std::vector<RoundRecord>& history,
                         std::ostream& os) {
  if (history.empty()) throw std::invalid_argument("empty history");
  os << "round,train_risk,grad_norm_l1,train_acc,valid_acc,embed_mse,K,"
        "sigma_min,wall_ms\n";
  for (const auto& r : history) {
    os << r.round << ',' << fmt17(r.train_risk) << ',' << fmt17(r.grad_norm_l1)
       << ',' << fmt17(r.train_acc) << ','
       << (std::isnan(r.valid_acc) ? std::string("nan") : fmt17(r.valid_acc))
       << ',' << fmt17(r.embed_mse) << ',' << fmt17(r.k_bound) << ','
       << fmt17(r.sigma_min) << ',' << fmt17(r.wall_ms) << '\n';
  }
}

}  // namespace resfgb
