#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "resfgb/common.hpp"

namespace resfgb {

// Dense supervised dataset. Labels are stored remapped to [0, c); label_map
// recovers the raw integer label for class k as label_map[k] (sorted
// ascending, so the remap is order-preserving).
struct Dataset {
  Matrix x;                          // n x d, one row per sample
  std::vector<int> y;                // internal labels in [0, c)
  int c = 0;                         // number of distinct labels seen
  std::vector<long long> label_map;  // internal -> raw

  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(x.cols()); }
  bool empty() const { return x.rows() == 0; }
};

struct SplitSpec {
  double valid_fraction = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void parse_fail(const char* what, int line_no) {
  throw std::runtime_error("parse error at line " + std::to_string(line_no) +
                           ": " + what);
}

inline double parse_double(std::string_view tok, int line_no) {
  // from_chars rejects an explicit plus sign, but labels like "+1" are
  // conventional in this format.
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) parse_fail("bad numeric value", line_no);
  double v = 0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || p != last) parse_fail("bad numeric value", line_no);
  return v;
}

// Raw labels must be integers; accepts an optional sign and a decimal point
// followed by zeros ("3", "+1", "-1.0").
inline long long parse_label(std::string_view tok, int line_no) {
  double v = parse_double(tok, line_no);
  double r = std::round(v);
  if (v != r || std::abs(v) > 9.0e18) parse_fail("label is not an integer", line_no);
  return static_cast<long long>(r);
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char ch) { return std::isspace(ch); });
}

// Sorted-unique raw labels become classes 0..c-1.
inline void remap_labels(const std::vector<long long>& raw, Dataset& ds) {
  std::vector<long long> uniq = raw;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  ds.label_map = uniq;
  ds.c = static_cast<int>(uniq.size());
  ds.y.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = std::lower_bound(uniq.begin(), uniq.end(), raw[i]);
    ds.y[i] = static_cast<int>(it - uniq.begin());
  }
}

}  // namespace detail

// LIBSVM text: "<label> <index>:<value> ...", indices 1-based and strictly
// ascending within a line. Feature count is max(d_hint, highest index seen).
inline Dataset parse_libsvm(std::string_view text, int d_hint = 0) {
  struct Entry {
    int row;
    int col;
    double val;
  };
  std::vector<Entry> entries;
  std::vector<long long> raw_labels;
  int d = d_hint;
  int row = 0;

  auto lines = detail::split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = lines[li];
    int line_no = static_cast<int>(li) + 1;
    if (detail::blank(line)) continue;

    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      return line.substr(start, pos - start);
    };

    std::string_view label_tok = next_token();
    if (label_tok.empty()) detail::parse_fail("missing label", line_no);
    raw_labels.push_back(detail::parse_label(label_tok, line_no));

    int prev_idx = 0;
    for (std::string_view tok = next_token(); !tok.empty(); tok = next_token()) {
      std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
        detail::parse_fail("expected index:value pair", line_no);
      int idx = 0;
      {
        const char* first = tok.data();
        const char* last = tok.data() + colon;
        auto [p, ec] = std::from_chars(first, last, idx);
        if (ec != std::errc{} || p != last) detail::parse_fail("bad feature index", line_no);
      }
      if (idx < 1) detail::parse_fail("feature index must be >= 1", line_no);
      if (idx <= prev_idx) detail::parse_fail("feature indices must be ascending", line_no);
      prev_idx = idx;
      double val = detail::parse_double(tok.substr(colon + 1), line_no);
      entries.push_back({row, idx - 1, val});
      d = std::max(d, idx);
    }
    ++row;
  }
  if (row == 0) throw std::runtime_error("parse error: empty input");

  Dataset ds;
  ds.x = Matrix::Zero(row, std::max(d, 1));
  for (const auto& e : entries) ds.x(e.row, e.col) = e.val;
  detail::remap_labels(raw_labels, ds);
  return ds;
}

// Comma-separated numeric table, label in the first or last column. A header
// row is detected (and skipped) when any cell of the first row fails to parse
// as a number. No quoting.
inline Dataset parse_csv(std::string_view text, bool label_last = true) {
  auto lines = detail::split_lines(text);
  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  std::size_t width = 0;
  bool first_data_row = true;

  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = lines[li];
    int line_no = static_cast<int>(li) + 1;
    if (detail::blank(line)) continue;

    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string_view::npos) {
        cells.push_back(line.substr(pos));
        break;
      }
      cells.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }

    if (first_data_row) {
      bool numeric = true;
      for (auto cell : cells) {
        if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
        double v;
        const char* first = cell.data();
        const char* last = cell.data() + cell.size();
        auto [p, ec] = std::from_chars(first, last, v);
        if (cell.empty() || ec != std::errc{} || p != last) {
          numeric = false;
          break;
        }
      }
      if (!numeric) continue;  // header row
      if (cells.size() < 2) detail::parse_fail("need at least two columns", line_no);
      width = cells.size();
      first_data_row = false;
    }
    if (cells.size() != width) detail::parse_fail("ragged row", line_no);

    std::size_t label_idx = label_last ? width - 1 : 0;
    raw_labels.push_back(detail::parse_label(cells[label_idx], line_no));
    std::vector<double> feats;
    feats.reserve(width - 1);
    for (std::size_t j = 0; j < width; ++j) {
      if (j == label_idx) continue;
      feats.push_back(detail::parse_double(cells[j], line_no));
    }
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw std::runtime_error("parse error: empty input");

  Dataset ds;
  ds.x.resize(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.x(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  detail::remap_labels(raw_labels, ds);
  return ds;
}

// Inverse of parse_libsvm for dense data: zeros are dropped, raw labels are
// written, values keep full precision.
inline void write_libsvm(const Dataset& ds, std::ostream& out) {
  for (int i = 0; i < ds.n(); ++i) {
    out << ds.label_map[ds.y[i]];
    for (int j = 0; j < ds.d(); ++j) {
      double v = ds.x(i, j);
      if (v != 0.0) out << ' ' << j + 1 << ':' << fmt17(v);
    }
    out << '\n';
  }
}

// Seeded shuffle split. Validation takes round(n * valid_fraction) samples;
// both parts keep the parent's class count and label map even if a class
// ends up absent from one side.
inline std::pair<Dataset, Dataset> split_train_valid(const Dataset& ds,
                                                     const SplitSpec& spec) {
  if (spec.valid_fraction < 0 || spec.valid_fraction >= 1)
    throw std::invalid_argument("valid_fraction must be in [0, 1)");
  Dataset train, valid;
  train.c = valid.c = ds.c;
  train.label_map = valid.label_map = ds.label_map;
  if (spec.valid_fraction == 0.0) {
    train.x = ds.x;
    train.y = ds.y;
    valid.x = Matrix(0, ds.d());
    return {std::move(train), std::move(valid)};
  }
  int n = ds.n();
  int n_valid = static_cast<int>(std::llround(n * spec.valid_fraction));
  int n_train = n - n_valid;
  if (n_valid < 1 || n_train < 1)
    throw std::runtime_error("split leaves an empty part");

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  SplitMix64 rng(spec.seed);
  shuffle_in_place(perm, rng);

  train.x.resize(n_train, ds.d());
  train.y.resize(n_train);
  valid.x.resize(n_valid, ds.d());
  valid.y.resize(n_valid);
  for (int i = 0; i < n_train; ++i) {
    train.x.row(i) = ds.x.row(perm[i]);
    train.y[i] = ds.y[perm[i]];
  }
  for (int i = 0; i < n_valid; ++i) {
    valid.x.row(i) = ds.x.row(perm[n_train + i]);
    valid.y[i] = ds.y[perm[n_train + i]];
  }
  return {std::move(train), std::move(valid)};
}

// Per-column affine map to mean 0 / population-std 1. Columns whose std falls
// below the floor are treated as constant: centered, scale left at 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static constexpr double kScaleFloor = 1e-8;

  // Column-by-column so batch and single-vector transforms perform the exact
  // same scalar operations.
  Matrix transform(const Matrix& x) const {
    if (x.cols() != mean.size())
      throw std::invalid_argument("standardizer dimension mismatch");
    Matrix out = x;
    out.rowwise() -= mean.transpose();
    for (int j = 0; j < out.cols(); ++j) out.col(j) /= scale(j);
    return out;
  }

  Vector transform(const Vector& v) const {
    if (v.size() != mean.size())
      throw std::invalid_argument("standardizer dimension mismatch");
    return (v - mean).cwiseQuotient(scale);
  }
};

inline Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() < 1) throw std::invalid_argument("cannot standardize empty data");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  Matrix centered = x.rowwise() - s.mean.transpose();
  s.scale = centered.array().square().colwise().mean().sqrt().transpose();
  for (int j = 0; j < s.scale.size(); ++j) {
    if (s.scale(j) < Standardizer::kScaleFloor) s.scale(j) = 1.0;
  }
  return s;
}

// Re-index ds.y against a reference label map (e.g. the one a model was
// trained with). Labels absent from the reference are an error.
inline void apply_label_map(Dataset& ds,
                            const std::vector<long long>& reference) {
  std::unordered_map<long long, int> lookup;
  for (std::size_t k = 0; k < reference.size(); ++k)
    lookup.emplace(reference[k], static_cast<int>(k));
  for (auto& label : ds.y) {
    auto it = lookup.find(ds.label_map[label]);
    if (it == lookup.end())
      throw std::runtime_error("unknown label " +
                               std::to_string(ds.label_map[label]));
    label = it->second;
  }
  ds.label_map = reference;
  ds.c = static_cast<int>(reference.size());
}

}  // namespace resfgb
