#pragma once

// Independent reference computations for the walk tests.

#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "schn/walk.hpp"

namespace oracle {

using boost::multiprecision::cpp_int;

inline cpp_int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  cpp_int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Simple +-1 paths of n steps from u to v that stay >= 1 (reflection principle).
inline cpp_int reflection_count(int n, int u, int v) {
  if ((n + v - u) % 2 != 0) return 0;
  return binomial(n, (n + v - u) / 2) - binomial(n, (n + v + u) / 2);
}

/// Backward recursion with memoisation over (remaining distance, height).
class BackwardBallot {
 public:
  BackwardBallot(const schn::StepDistribution& steps, int v, int cap) : steps_(steps), v_(v), cap_(cap) {}

  double operator()(int remaining, int h) {
    if (h <= 0 || h > cap_) return 0.0;
    if (remaining == 0) return h == v_ ? 1.0 : 0.0;
    const auto key = std::pair(remaining, h);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    double s = 0.0;
    for (const auto& st : steps_.steps) {
      if (st.theta <= remaining) s += st.weight * (*this)(remaining - st.theta, h + st.zeta);
    }
    memo_[key] = s;
    return s;
  }

 private:
  const schn::StepDistribution& steps_;
  int v_, cap_;
  std::map<std::pair<int, int>, double> memo_;
};

/// Irreducible pieces found by testing every step sequence of each length.
inline std::map<std::pair<int, int>, std::vector<std::uint64_t>> brute_animals(int max_len) {
  std::map<std::pair<int, int>, std::vector<std::uint64_t>> out;
  const int dx[] = {1, 0, 0, -1}, dy[] = {0, 1, -1, 0};
  for (int L = 1; L <= max_len; ++L) {
    std::uint64_t total = 1;
    for (int i = 0; i < L; ++i) total *= 4;
    for (std::uint64_t code = 0; code < total; ++code) {
      std::vector<std::pair<int, int>> path{{0, 0}};
      std::uint64_t c = code;
      for (int i = 0; i < L; ++i, c /= 4) {
        const int d = static_cast<int>(c % 4);
        path.emplace_back(path.back().first + dx[d], path.back().second + dy[d]);
      }
      const std::set<std::pair<int, int>> uniq(path.begin(), path.end());
      if (uniq.size() != path.size()) continue;
      const int theta = path.back().first;
      if (theta < 1) continue;
      std::map<int, int> column;
      bool ok = true;
      for (std::size_t i = 0; i < path.size(); ++i) {
        const int x = path[i].first;
        if (i > 0 && x <= 0) ok = false;
        if (i + 1 < path.size() && x >= theta) ok = false;
        ++column[x];
      }
      for (int x = 1; x < theta && ok; ++x) ok = column[x] >= 2;
      if (!ok) continue;
      auto& v = out[{theta, path.back().second}];
      if (v.empty()) v.assign(static_cast<std::size_t>(max_len + 1), 0);
      ++v[static_cast<std::size_t>(L)];
    }
  }
  return out;
}

}  // namespace oracle
