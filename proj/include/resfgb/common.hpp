#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace resfgb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Counter-based splitmix generator. Every random choice in the library flows
// through this type, so a (seed, data, config) triple pins results exactly,
// independent of platform or standard-library implementation.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1) with 53 random bits
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform in [0,n) via the multiply-high map; bias is below n/2^64
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates; consumes exactly size()-1 draws.
template <typename T>
void shuffle_in_place(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.next_below(i)]);
  }
}

// 17 significant decimal digits: enough for IEEE doubles to survive a
// text round trip bit-for-bit.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Ties resolve to the smallest index.
inline int argmax_index(const RowVector& r) {
  int best = 0;
  for (int j = 1; j < r.size(); ++j) {
    if (r(j) > r(best)) best = j;
  }
  return best;
}

}  // namespace resfgb
