#pragma once

// Effective random walk built from irreducible path pieces, and ballot
// probabilities for it.
//
// A step is X = (theta, zeta): horizontal advance theta >= 1 and vertical
// displacement zeta. The walk starts at (-N, u) and must stay strictly
// positive; it arrives at (0, v) only if some partial sum of the thetas hits
// N exactly. Walks whose horizontal coordinate jumps over 0 never arrive.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "schn/ensemble.hpp"
#include "schn/error.hpp"
#include "schn/rng.hpp"
#include "schn/stats.hpp"

namespace schn {

template <class W>
struct WeightedStep {
  int theta = 1;
  int zeta = 0;
  W weight{};
};

using Step = WeightedStep<double>;

/// Probability table over steps, sorted by (theta, zeta).
struct StepDistribution {
  std::vector<Step> steps;
  /// Weight kept before normalisation, divided by kept plus estimated tail.
  double captured_mass = 1.0;
  bool flagged = false;
  std::string diagnostic;

  [[nodiscard]] double total() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.weight;
    return s;
  }
  [[nodiscard]] double probability(int theta, int zeta) const {
    for (const auto& st : steps) {
      if (st.theta == theta && st.zeta == zeta) return st.weight;
    }
    return 0.0;
  }
  [[nodiscard]] double mean_theta() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.weight * st.theta;
    return s;
  }
  [[nodiscard]] double mean_zeta() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.weight * st.zeta;
    return s;
  }
  [[nodiscard]] double var_zeta() const {
    const double m = mean_zeta();
    double s = 0.0;
    for (const auto& st : steps) s += st.weight * (st.zeta - m) * (st.zeta - m);
    return s;
  }
  [[nodiscard]] int max_theta() const {
    int m = 0;
    for (const auto& st : steps) m = std::max(m, st.theta);
    return m;
  }
  [[nodiscard]] int max_abs_zeta() const {
    int m = 0;
    for (const auto& st : steps) m = std::max(m, std::abs(st.zeta));
    return m;
  }
  /// P(zeta = k) for k in [-max_abs_zeta, max_abs_zeta], offset by max_abs_zeta.
  [[nodiscard]] std::vector<double> zeta_marginal() const {
    const int z = max_abs_zeta();
    std::vector<double> out(static_cast<std::size_t>(2 * z + 1), 0.0);
    for (const auto& st : steps) out[static_cast<std::size_t>(st.zeta + z)] += st.weight;
    return out;
  }
  /// The walk -Z.
  [[nodiscard]] StepDistribution reflected() const {
    StepDistribution out = *this;
    for (auto& st : out.steps) st.zeta = -st.zeta;
    std::sort(out.steps.begin(), out.steps.end(), [](const Step& a, const Step& b) {
      return std::pair(a.theta, a.zeta) < std::pair(b.theta, b.zeta);
    });
    return out;
  }
};

namespace detail {

inline StepDistribution normalised(std::map<std::pair<int, int>, double> table) {
  double total = 0.0;
  for (const auto& [k, w] : table) total += w;
  require(total > 0.0, "step law has no mass");
  StepDistribution out;
  for (const auto& [k, w] : table) {
    if (w > 0.0) out.steps.push_back({k.first, k.second, w / total});
  }
  return out;
}

}  // namespace detail

/// theta = 1, zeta = +-1 with probability 1/2 each.
inline StepDistribution simple_steps() {
  return detail::normalised({{{1, -1}, 1.0}, {{1, 1}, 1.0}});
}

/// P(theta = t, zeta = k) proportional to q^(t-1) exp(-c|k|) for t <= 60 and
/// |k| <= 60. c = infinity gives zeta = 0.
inline StepDistribution parametric_steps(double c, double q) {
  detail::require(c > 0.0, "parametric_steps: c must be > 0");
  detail::require(q > 0.0 && q < 1.0, "parametric_steps: q must be in (0, 1)");
  constexpr int kMax = 60;
  std::map<std::pair<int, int>, double> table;
  for (int t = 1; t <= kMax; ++t) {
    const double wt = std::pow(q, t - 1);
    for (int k = -kMax; k <= kMax; ++k) {
      if (std::isinf(c) && k != 0) continue;
      const double w = std::isinf(c) ? wt : wt * std::exp(-c * std::abs(k));
      if (w > 0.0) table[{t, k}] = w;
    }
  }
  return detail::normalised(std::move(table));
}

/// Irreducible bare path pieces with length counts, keyed by (theta, zeta).
/// A piece starts at (0, 0), is the only vertex of its path in columns <= 0
/// and > theta - 1 besides its end point (theta, zeta), and every column in
/// between is visited at least twice (no vertex that splits the path).
struct AnimalCounts {
  int size_cutoff = 0;
  /// counts[(theta, zeta)][length]
  std::map<std::pair<int, int>, std::vector<std::uint64_t>> counts;
  /// Number of pieces of each length.
  std::vector<std::uint64_t> shells;
};

inline AnimalCounts enumerate_animals(int size_cutoff) {
  detail::require(size_cutoff >= 1 && size_cutoff <= 10,
                  "enumerate_animals: size cutoff must be in [1, 10]");
  AnimalCounts out;
  out.size_cutoff = size_cutoff;
  out.shells.assign(static_cast<std::size_t>(size_cutoff + 1), 0);
  const int L = size_cutoff;
  const int w = 2 * L + 3;
  // Columns 0..L, rows -L..L.
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(w * w), 0);
  std::vector<int> column(static_cast<std::size_t>(L + 2), 0);
  auto cell = [&](int x, int y) { return static_cast<std::size_t>((y + L + 1) * w + x); };
  visited[cell(0, 0)] = 1;
  visited[cell(1, 0)] = 1;
  column[1] = 1;

  auto record = [&](int theta, int zeta, int len) {
    auto& v = out.counts[{theta, zeta}];
    if (v.empty()) v.assign(static_cast<std::size_t>(L + 1), 0);
    ++v[static_cast<std::size_t>(len)];
    ++out.shells[static_cast<std::size_t>(len)];
  };
  auto dfs = [&](auto&& self, int x, int y, int max_col, int len) -> void {
    if (len == L) return;
    static constexpr int dx[] = {1, 0, 0, -1};
    static constexpr int dy[] = {0, 1, -1, 0};
    for (int d = 0; d < 4; ++d) {
      const int nx = x + dx[d], ny = y + dy[d];
      if (nx < 1 || visited[cell(nx, ny)]) continue;
      const int nmax = std::max(max_col, nx);
      if (nx > max_col) {
        bool irreducible = true;
        for (int c = 1; c < nx && irreducible; ++c) irreducible = column[c] >= 2;
        if (irreducible) record(nx, ny, len + 1);
      }
      visited[cell(nx, ny)] = 1;
      ++column[nx];
      self(self, nx, ny, nmax, len + 1);
      --column[nx];
      visited[cell(nx, ny)] = 0;
    }
  };
  record(1, 0, 1);
  dfs(dfs, 1, 0, 1, 1);
  return out;
}

/// Step law from irreducible pieces weighted exp(-beta' |piece|). Pieces
/// longer than `size_cutoff` are dropped; their weight is estimated from the
/// last length shells and the law is flagged when it exceeds 0.1%.
inline StepDistribution build_steps_from_animals(const WeightModel& model, int size_cutoff) {
  model.validate();
  detail::require(!model.has_clusters(), "build_steps_from_animals: cluster weights unsupported");
  const double beta = model.walk_beta();
  const AnimalCounts animals = enumerate_animals(size_cutoff);
  std::map<std::pair<int, int>, double> table;
  for (const auto& [key, by_len] : animals.counts) {
    double w = 0.0;
    for (std::size_t l = 0; l < by_len.size(); ++l) {
      w += static_cast<double>(by_len[l]) * std::exp(-beta * static_cast<double>(l));
    }
    table[key] = w;
  }
  double kept = 0.0;
  for (const auto& [k, w] : table) kept += w;

  // Geometric tail over pairs of lengths (both parities occur).
  std::vector<double> shell(animals.shells.size(), 0.0);
  for (std::size_t l = 0; l < shell.size(); ++l) {
    shell[l] = static_cast<double>(animals.shells[l]) * std::exp(-beta * static_cast<double>(l));
  }
  const int K = size_cutoff;
  double tail = 0.0;
  if (K >= 2) {
    const double last = shell[static_cast<std::size_t>(K)] + shell[static_cast<std::size_t>(K - 1)];
    double r = std::pow(kSawConnectiveConstant * std::exp(-beta), 2.0);
    if (K >= 4) {
      const double prev =
          shell[static_cast<std::size_t>(K - 2)] + shell[static_cast<std::size_t>(K - 3)];
      if (prev > 0.0) r = std::max(r, last / prev);
    }
    tail = r >= 1.0 ? std::numeric_limits<double>::infinity() : last * r / (1.0 - r);
  } else {
    tail = std::numeric_limits<double>::infinity();
  }

  StepDistribution out = detail::normalised(std::move(table));
  out.captured_mass = kept / (kept + tail);
  if (!(out.captured_mass >= 0.999)) {
    out.flagged = true;
    out.diagnostic = "size cutoff " + std::to_string(size_cutoff) + " keeps only " +
                     std::to_string(out.captured_mass) + " of the estimated mass at beta' " +
                     std::to_string(beta);
  }
  return out;
}

/// P(zeta = k) <= amplitude * exp(-rate |k|): rate from a least-squares fit
/// of log P(zeta = k) over k >= 1, amplitude as the tightest envelope.
struct Localization {
  double rate = 0.0;
  double amplitude = 0.0;
  double r2 = 0.0;
  int points = 0;
};

inline std::optional<Localization> fit_localization(const StepDistribution& steps) {
  const auto marg = steps.zeta_marginal();
  const int z = steps.max_abs_zeta();
  std::vector<double> xs, ys;
  for (int k = 1; k <= z; ++k) {
    const double p = 0.5 * (marg[static_cast<std::size_t>(z + k)] + marg[static_cast<std::size_t>(z - k)]);
    if (p > 0.0) {
      xs.push_back(k);
      ys.push_back(std::log(p));
    }
  }
  if (xs.size() < 2) return std::nullopt;
  const LinearFit fit = fit_line(xs, ys);
  Localization out;
  out.rate = -fit.slope;
  out.r2 = fit.r2;
  out.points = static_cast<int>(xs.size());
  for (int k = -z; k <= z; ++k) {
    const double p = marg[static_cast<std::size_t>(z + k)];
    out.amplitude = std::max(out.amplitude, p * std::exp(out.rate * std::abs(k)));
  }
  return out;
}

/// Weight of walks from (-N, u) to (0, v) staying in [1, height_cap], for
/// every v. Heights above the cap are dropped.
template <class W>
std::vector<W> ballot_weights(int N, int u, std::span<const WeightedStep<W>> steps, int height_cap) {
  detail::require(N >= 0, "ballot: N must be >= 0");
  detail::require(u >= 1 && u <= height_cap, "ballot: need 1 <= u <= height_cap");
  const auto H = static_cast<std::size_t>(height_cap + 1);
  std::vector<std::vector<W>> f(static_cast<std::size_t>(N + 1), std::vector<W>(H, W(0)));
  std::vector<std::uint8_t> live(static_cast<std::size_t>(N + 1), 0);
  f[0][static_cast<std::size_t>(u)] = W(1);
  live[0] = 1;
  for (int t = 0; t < N; ++t) {
    if (!live[static_cast<std::size_t>(t)]) continue;
    const auto& row = f[static_cast<std::size_t>(t)];
    for (const auto& st : steps) {
      const int t2 = t + st.theta;
      if (t2 > N) continue;
      auto& dst = f[static_cast<std::size_t>(t2)];
      const int lo = std::max(1, 1 - st.zeta);
      const int hi = std::min(height_cap, height_cap - st.zeta);
      bool any = false;
      for (int h = lo; h <= hi; ++h) {
        const W& x = row[static_cast<std::size_t>(h)];
        if (x == W(0)) continue;
        dst[static_cast<std::size_t>(h + st.zeta)] += x * st.weight;
        any = true;
      }
      if (any) live[static_cast<std::size_t>(t2)] = 1;
    }
    // Row t is final once processed.
    std::vector<W>().swap(f[static_cast<std::size_t>(t)]);
  }
  return f[static_cast<std::size_t>(N)];
}

enum class BallotMethod { dp, mc };

inline const char* to_string(BallotMethod m) { return m == BallotMethod::dp ? "dp" : "mc"; }

struct BallotResult {
  double probability = 0.0;
  BallotMethod method = BallotMethod::dp;
  double std_error = 0.0;
  int height_cap = 0;
  /// Relative change when the cap was last doubled.
  double cap_sensitivity = 0.0;
  std::int64_t n_walks = 0;
  bool flagged = false;
};

/// Smallest cap allowed for length N.
inline int default_height_cap(int N) {
  return std::max(1, static_cast<int>(std::ceil(4.0 * std::sqrt(static_cast<double>(N)))));
}

struct BallotRow {
  /// probability[v] for v in [0, height_cap]; entry 0 is always 0.
  std::vector<double> probability;
  int height_cap = 0;
  double cap_sensitivity = 0.0;
  bool flagged = false;
};

/// All arrival heights at once. The cap is doubled until the largest relative
/// change over heights in [1, v_max] is <= 1e-10 or four doublings are spent.
inline BallotRow ballot_row(int N, int u, int v_max, const StepDistribution& steps,
                            int height_cap = 0) {
  if (height_cap == 0) height_cap = std::max({default_height_cap(N), u, v_max + 1});
  detail::require(height_cap >= 4.0 * std::sqrt(static_cast<double>(N)),
                  "ballot: height cap must be >= 4 sqrt(N)");
  detail::require(u >= 1 && v_max >= 1, "ballot: u and v must be >= 1");
  detail::require(height_cap >= std::max(u, v_max), "ballot: cap below the endpoints");
  // Highest reachable height; a cap at or above it truncates nothing.
  int up = 0;
  for (const auto& st : steps.steps) up = std::max(up, st.zeta);
  const long long reach = u + static_cast<long long>(N) * up;

  BallotRow out;
  out.height_cap = height_cap;
  auto row = ballot_weights<double>(N, u, steps.steps, height_cap);
  if (reach <= height_cap) {
    out.probability = std::move(row);
    return out;
  }
  for (int k = 0; k < 4; ++k) {
    const int cap2 = 2 * out.height_cap;
    auto row2 = ballot_weights<double>(N, u, steps.steps, cap2);
    double sens = 0.0;
    for (int v = 1; v <= v_max; ++v) {
      const double a = row[static_cast<std::size_t>(v)];
      const double b = row2[static_cast<std::size_t>(v)];
      if (b > 0.0) sens = std::max(sens, std::abs(b - a) / b);
    }
    row = std::move(row2);
    out.height_cap = cap2;
    out.cap_sensitivity = sens;
    if (sens <= 1e-10 || reach <= cap2) break;
  }
  out.flagged = out.cap_sensitivity > 1e-10;
  out.probability = std::move(row);
  return out;
}

/// P(walk from (-N, u) stays positive and arrives at (0, v)) by forward
/// dynamic programming over (position, height).
inline BallotResult ballot_dp(int N, int u, int v, const StepDistribution& steps,
                              int height_cap = 0) {
  detail::require(v >= 1, "ballot_dp: v must be >= 1");
  const BallotRow row = ballot_row(N, u, v, steps, height_cap);
  BallotResult out;
  out.probability = row.probability[static_cast<std::size_t>(v)];
  out.height_cap = row.height_cap;
  out.cap_sensitivity = row.cap_sensitivity;
  out.flagged = row.flagged;
  return out;
}

/// Direct simulation. Walk i draws from make_light_stream(seed, i), so the result
/// does not depend on the thread count.
inline BallotResult ballot_mc(int N, int u, int v, const StepDistribution& steps,
                              std::int64_t n_walks, std::uint64_t seed, int threads = 1) {
  detail::require(N >= 0 && u >= 1 && v >= 1, "ballot_mc: need N >= 0 and u, v >= 1");
  detail::require(n_walks >= 1, "ballot_mc: need at least one walk");
  detail::require(!steps.steps.empty(), "ballot_mc: empty step law");
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& st : steps.steps) cdf.push_back(acc += st.weight);

  auto one_walk = [&](std::int64_t i) {
    Rng rng = make_light_stream(seed, static_cast<std::uint64_t>(i));
    long long t = 0, h = u;
    while (t < N) {
      const double r = uniform01(rng) * acc;
      auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
      k = std::min(k, cdf.size() - 1);
      t += steps.steps[k].theta;
      h += steps.steps[k].zeta;
      if (h <= 0) return false;
    }
    return t == N && h == v;
  };

  constexpr std::int64_t kBlock = 1024;
  const std::int64_t blocks = (n_walks + kBlock - 1) / kBlock;
  std::atomic<std::int64_t> next{0};
  std::atomic<std::int64_t> hits{0};
  auto worker = [&] {
    std::int64_t local = 0;
    for (std::int64_t b = next++; b < blocks; b = next++) {
      const std::int64_t end = std::min(n_walks, (b + 1) * kBlock);
      for (std::int64_t i = b * kBlock; i < end; ++i) local += one_walk(i) ? 1 : 0;
    }
    hits += local;
  };
  threads = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  BallotResult out;
  out.method = BallotMethod::mc;
  out.n_walks = n_walks;
  const double n = static_cast<double>(n_walks);
  out.probability = static_cast<double>(hits.load()) / n;
  out.std_error = std::sqrt(out.probability * (1.0 - out.probability) / n);
  return out;
}

struct HarmonicValue {
  double value = 0.0;
  /// Change against a solve on twice the horizon.
  double tail_bound = 0.0;
  bool flagged = false;
};

namespace detail {

// g(x) = E_x Z_tau on 1..H for a driftless vertical walk, with g(y) = y below
// 1 and g(y) = g(H) above H. g is bounded, so the flat continuation is exact
// in the limit and its error shrinks with H.
inline Eigen::VectorXd overshoot_mean(const std::vector<double>& marg, int zmax, int H) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(H, H);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(H);
  for (int x = 1; x <= H; ++x) {
    for (int k = -zmax; k <= zmax; ++k) {
      const double p = marg[static_cast<std::size_t>(k + zmax)];
      if (p == 0.0) continue;
      const int y = x + k;
      if (y <= 0) {
        b(x - 1) += p * y;
      } else {
        A(x - 1, std::min(y, H) - 1) -= p;
      }
    }
  }
  return A.partialPivLu().solve(b);
}

}  // namespace detail

/// h+(x) = x - E_x Z_tau, tau the first time the vertical coordinate is <= 0.
/// `horizon` is the height at which the solve is truncated; 0 picks
/// max(4x, 200). A walk without vertical motion gives h+(x) = x.
inline HarmonicValue h_plus(int x, const StepDistribution& steps, int horizon = 0) {
  detail::require(x >= 1, "h_plus: x must be >= 1");
  HarmonicValue out;
  if (steps.var_zeta() == 0.0) {
    out.value = x;
    return out;
  }
  detail::require(std::abs(steps.mean_zeta()) < 1e-9, "h_plus: vertical drift must be zero");
  if (horizon == 0) horizon = std::max(4 * x, 200);
  detail::require(horizon >= x, "h_plus: horizon below x");
  const auto marg = steps.zeta_marginal();
  const int z = steps.max_abs_zeta();
  const double g1 = detail::overshoot_mean(marg, z, horizon)(x - 1);
  const double g2 = detail::overshoot_mean(marg, z, 2 * horizon)(x - 1);
  out.value = x - g2;
  out.tail_bound = std::abs(g2 - g1);
  out.flagged = out.tail_bound > 1e-8;
  return out;
}

/// h- is h+ of the reflected walk.
inline HarmonicValue h_minus(int x, const StepDistribution& steps, int horizon = 0) {
  return h_plus(x, steps.reflected(), horizon);
}

/// Fixed parameter of the regime windows.
inline constexpr double kRegimeDelta = 0.01;

struct ScalingPoint {
  int N = 0;
  double probability = 0.0;
};

struct MiddlePoint {
  int N = 0;
  int v = 0;
  bool in_window = true;
  double probability = 0.0;
  /// h+(u) v exp(-v^2 / 2N) Var(zeta) N^(-3/2)
  double factor = 0.0;
  double ratio = 0.0;
};

struct DiffusivePoint {
  int N = 0;
  int height = 0;
  /// sqrt(N) * P(height -> height)
  double scaled = 0.0;
};

struct ScalingReport {
  int u = 0, v = 0;
  std::vector<ScalingPoint> points;
  LinearFit fit;
  double exponent = 0.0;
  /// No vertical motion: probabilities are 0 or 1 and exponent 0.
  bool degenerate = false;
  bool flagged = false;
  std::vector<MiddlePoint> middle;
  /// max ratio / min ratio - 1 over the middle regime.
  double middle_spread = 0.0;
  std::vector<DiffusivePoint> diffusive;
  bool diffusive_converging = false;
  bool cap_flagged = false;
};

/// Exponent of P(u -> v) against N, the middle-regime factor and the
/// diffusive-regime proxy for the given N values.
inline ScalingReport scaling_suite(const StepDistribution& steps, int u, int v,
                                   std::span<const int> N_list) {
  detail::require(N_list.size() >= 4, "scaling_suite: need at least 4 values of N");
  for (std::size_t i = 1; i < N_list.size(); ++i) {
    detail::require(N_list[i] > N_list[i - 1], "scaling_suite: N values must increase");
  }
  ScalingReport out;
  out.u = u;
  out.v = v;
  out.degenerate = steps.var_zeta() == 0.0;
  std::vector<double> lx, ly;
  for (const int N : N_list) {
    const auto r = ballot_dp(N, u, v, steps);
    out.cap_flagged = out.cap_flagged || r.flagged;
    out.points.push_back({N, r.probability});
    if (r.probability > 0.0) {
      lx.push_back(std::log(static_cast<double>(N)));
      ly.push_back(std::log(r.probability));
    }
  }
  if (lx.size() >= 2) {
    out.fit = fit_line(lx, ly);
    out.exponent = out.fit.slope;
    if (out.degenerate) out.fit.r2 = 1.0;
  }
  out.flagged = lx.size() < N_list.size() || (!out.degenerate && out.fit.r2 < 0.99);
  if (out.degenerate) return out;

  const double var = steps.var_zeta();
  const double hu = h_plus(u, steps).value;
  double lo_ratio = std::numeric_limits<double>::infinity(), hi_ratio = 0.0;
  for (const int N : N_list) {
    const double n = N;
    const int lo = static_cast<int>(std::ceil(std::pow(n, 0.5 - kRegimeDelta)));
    const int hi = static_cast<int>(std::floor(std::sqrt(n)));
    const BallotRow row = ballot_row(N, u, std::max(hi, 1), steps);
    out.cap_flagged = out.cap_flagged || row.flagged;
    MiddlePoint mp;
    mp.N = N;
    // Largest reachable height in the window, else the largest below it.
    for (int w = hi; w >= 1; --w) {
      if (row.probability[static_cast<std::size_t>(w)] > 0.0) {
        mp.v = w;
        break;
      }
    }
    if (mp.v == 0) continue;
    mp.in_window = mp.v >= lo;
    mp.probability = row.probability[static_cast<std::size_t>(mp.v)];
    mp.factor = hu * mp.v * std::exp(-mp.v * mp.v / (2.0 * n)) * var * std::pow(n, -1.5);
    mp.ratio = mp.probability / mp.factor;
    lo_ratio = std::min(lo_ratio, mp.ratio);
    hi_ratio = std::max(hi_ratio, mp.ratio);
    out.middle.push_back(mp);
  }
  if (!out.middle.empty()) out.middle_spread = hi_ratio / lo_ratio - 1.0;

  for (const int N : N_list) {
    const int m = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(N)) / 2.0)));
    const auto r = ballot_dp(N, m, m, steps);
    out.diffusive.push_back({N, m, std::sqrt(static_cast<double>(N)) * r.probability});
  }
  out.diffusive_converging = out.diffusive.size() >= 3;
  for (std::size_t i = 2; i < out.diffusive.size(); ++i) {
    const double d1 = std::abs(out.diffusive[i - 1].scaled - out.diffusive[i - 2].scaled);
    const double d2 = std::abs(out.diffusive[i].scaled - out.diffusive[i - 1].scaled);
    if (d2 > d1) out.diffusive_converging = false;
  }
  return out;
}

/// P(u -> v + 1) / P(u -> v); +infinity when only the numerator is positive.
inline double endpoint_ratio_walk(int N, int u, int v, const StepDistribution& steps) {
  const BallotRow row = ballot_row(N, u, v + 1, steps);
  const double num = row.probability[static_cast<std::size_t>(v + 1)];
  const double den = row.probability[static_cast<std::size_t>(v)];
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

struct UniformityReport {
  std::vector<int> N;
  /// max over u, v in [1, floor(sqrt N)] of the endpoint ratio, per N.
  std::vector<double> max_ratio;
  /// Least-squares slope of max_ratio against log N.
  double slope = 0.0;
  /// max over all N divided by the value at the first N.
  double growth = 0.0;
};

inline UniformityReport endpoint_ratio_uniformity(const StepDistribution& steps,
                                                  std::span<const int> N_list) {
  detail::require(N_list.size() >= 2, "endpoint_ratio_uniformity: need at least 2 values of N");
  UniformityReport out;
  std::vector<double> lx;
  for (const int N : N_list) {
    const int top = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(N)))));
    double best = 0.0;
    for (int u = 1; u <= top; ++u) {
      const BallotRow row = ballot_row(N, u, top + 1, steps);
      for (int v = 1; v <= top; ++v) {
        const double den = row.probability[static_cast<std::size_t>(v)];
        const double num = row.probability[static_cast<std::size_t>(v + 1)];
        if (den > 0.0) best = std::max(best, num / den);
      }
    }
    out.N.push_back(N);
    out.max_ratio.push_back(best);
    lx.push_back(std::log(static_cast<double>(N)));
  }
  out.slope = fit_line(lx, out.max_ratio).slope;
  out.growth = *std::max_element(out.max_ratio.begin(), out.max_ratio.end()) / out.max_ratio.front();
  return out;
}

inline void write_walk_csv_header(std::ostream& out) {
  out << "N,u,v,method,probability,stderr,height_cap,cap_sensitivity\n";
}

inline void write_walk_csv_row(std::ostream& out, int N, int u, int v, const BallotResult& r) {
  const auto old = out.precision(17);
  out << N << ',' << u << ',' << v << ',' << to_string(r.method) << ',' << r.probability << ','
      << r.std_error << ',' << r.height_cap << ',' << r.cap_sensitivity << '\n';
  out.precision(old);
}

}  // namespace schn
