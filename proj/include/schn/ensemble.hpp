#pragma once

// Truncated exact sums over self-avoiding lattice paths with contour weights
// w(path) = exp(-beta |path| + sum over clusters touching the path of Phi).
//
// Paths live on Z^2 (the dual lattice shifted to integer coordinates). The
// semistrip ensemble joins (0, u) to (N, v) with every vertex in
// [0, N] x [0, inf). A path ends the first time it reaches its endpoint.
// Sums are truncated at a maximal length; the neglected tail is estimated by
// geometric extrapolation of the last two length shells.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <exception>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "schn/error.hpp"
#include "schn/lattice.hpp"
#include "schn/rng.hpp"

namespace schn {

/// Square-lattice self-avoiding walk growth constant.
inline constexpr double kSawConnectiveConstant = 2.679192495;

/// Phi(L) = amplitude * exp(-rate * diam(L)) for every lattice animal L of at
/// most four sites (l-infinity diameter) that touches the path and lies in
/// the ensemble's region.
struct SyntheticClusters {
  double amplitude = 0.0;
  /// 0 means 2 * beta.
  double rate = 0.0;
};

struct WeightModel {
  double beta = 1.0;
  /// Walk temperature; unset means beta.
  std::optional<double> beta_prime;
  std::optional<SyntheticClusters> clusters;

  [[nodiscard]] double walk_beta() const { return beta_prime.value_or(beta); }
  [[nodiscard]] double cluster_rate() const {
    return clusters && clusters->rate > 0.0 ? clusters->rate : 2.0 * beta;
  }
  [[nodiscard]] bool has_clusters() const { return clusters.has_value(); }

  void validate() const {
    detail::require(beta > 0.0, "WeightModel: beta must be > 0");
    detail::require(!beta_prime || *beta_prime > 0.0, "WeightModel: beta_prime must be > 0");
    if (clusters) {
      detail::require(std::abs(clusters->amplitude) <= 1.0,
                      "WeightModel: cluster amplitude must satisfy |a| <= 1");
      detail::require(clusters->rate == 0.0 || clusters->rate >= 2.0 * beta,
                      "WeightModel: cluster decay rate must be >= 2 beta");
    }
  }
};

/// Inclusive rectangle of allowed path vertices (and cluster sites).
struct PathRegion {
  static constexpr int kUnbounded = 1 << 20;

  int x_min = -kUnbounded;
  int x_max = kUnbounded;
  int y_min = -kUnbounded;
  int y_max = kUnbounded;

  [[nodiscard]] bool contains(Site s) const {
    return s.x >= x_min && s.x <= x_max && s.y >= y_min && s.y <= y_max;
  }
};

struct PathProblem {
  Site from;
  Site to;
  PathRegion region;
  int cutoff = 0;

  [[nodiscard]] int min_length() const {
    return std::abs(to.x - from.x) + std::abs(to.y - from.y);
  }
};

namespace detail {

struct ClusterPlacement {
  std::vector<Site> cells;  // offsets from the anchoring path vertex
  int diameter = 0;
};

// Fixed polyominoes of up to four cells, one placement per (shape, cell).
inline const std::vector<ClusterPlacement>& cluster_placements() {
  static const std::vector<ClusterPlacement> placements = [] {
    std::set<std::vector<Site>> shapes;
    std::vector<std::vector<Site>> frontier{{Site{0, 0}}};
    shapes.insert(frontier.front());
    for (int size = 2; size <= 4; ++size) {
      std::vector<std::vector<Site>> next;
      for (const auto& shape : frontier) {
        for (const Site c : shape) {
          for (const Site d : {Site{1, 0}, Site{-1, 0}, Site{0, 1}, Site{0, -1}}) {
            const Site n{c.x + d.x, c.y + d.y};
            if (std::find(shape.begin(), shape.end(), n) != shape.end()) continue;
            auto grown = shape;
            grown.push_back(n);
            int mx = grown[0].x, my = grown[0].y;
            for (const Site s : grown) {
              mx = std::min(mx, s.x);
              my = std::min(my, s.y);
            }
            for (Site& s : grown) s = {s.x - mx, s.y - my};
            std::sort(grown.begin(), grown.end());
            if (shapes.insert(grown).second) next.push_back(grown);
          }
        }
      }
      frontier = std::move(next);
    }
    std::vector<ClusterPlacement> out;
    for (const auto& shape : shapes) {
      int w = 0, h = 0;
      for (const Site s : shape) {
        w = std::max(w, s.x);
        h = std::max(h, s.y);
      }
      for (const Site anchor : shape) {
        ClusterPlacement p;
        p.diameter = std::max(w, h);
        for (const Site s : shape) p.cells.push_back({s.x - anchor.x, s.y - anchor.y});
        out.push_back(std::move(p));
      }
    }
    return out;
  }();
  return placements;
}

// Depth-first self-avoiding path search with Manhattan pruning.
class PathSearch {
 public:
  PathSearch(const PathProblem& problem, const WeightModel* clusters)
      : p_(problem), model_(clusters) {
    const int r = problem.cutoff;
    box_ = {std::max(problem.region.x_min, problem.from.x - r),
            std::min(problem.region.x_max, problem.from.x + r),
            std::max(problem.region.y_min, problem.from.y - r),
            std::min(problem.region.y_max, problem.from.y + r)};
    w_ = box_.x_max - box_.x_min + 1;
    h_ = box_.y_max - box_.y_min + 1;
    visited_.assign(static_cast<std::size_t>(std::max(0, w_ * h_)), 0);
    if (model_ != nullptr && model_->has_clusters()) {
      const double rate = model_->cluster_rate();
      for (const auto& pl : cluster_placements()) {
        phi_.push_back(model_->clusters->amplitude * std::exp(-rate * pl.diameter));
      }
    }
  }

  // Calls visit(path, cluster_sum) for every path extending `prefix`.
  template <class Visit>
  void run(std::span<const Site> prefix, Visit&& visit) {
    path_.clear();
    sums_.clear();
    for (const Site s : prefix) push(s);
    if (path_.back() == p_.to) {
      visit(std::span<const Site>(path_), sums_.back());
    } else {
      extend(visit);
    }
    while (!path_.empty()) pop();
  }

  // Prefixes of exactly `depth` steps, and complete paths shorter than that,
  // in depth-first order.
  std::vector<std::vector<Site>> prefixes(int depth) {
    std::vector<std::vector<Site>> out;
    path_.clear();
    sums_.clear();
    push(p_.from);
    if (p_.from == p_.to) {
      out.push_back(path_);
    } else {
      collect(out, depth);
    }
    pop();
    return out;
  }

  [[nodiscard]] bool startable() const {
    return box_.x_min <= box_.x_max && box_.y_min <= box_.y_max &&
           p_.region.contains(p_.from) && p_.region.contains(p_.to);
  }

 private:
  [[nodiscard]] bool in_box(Site s) const {
    return s.x >= box_.x_min && s.x <= box_.x_max && s.y >= box_.y_min && s.y <= box_.y_max;
  }
  [[nodiscard]] std::size_t cell(Site s) const {
    return static_cast<std::size_t>((s.y - box_.y_min) * w_ + (s.x - box_.x_min));
  }
  [[nodiscard]] bool seen(Site s) const { return in_box(s) && visited_[cell(s)] != 0; }

  void push(Site s) {
    double add = 0.0;
    if (!phi_.empty()) {
      const auto& pls = cluster_placements();
      for (std::size_t k = 0; k < pls.size(); ++k) {
        bool ok = true;
        for (const Site d : pls[k].cells) {
          const Site c{s.x + d.x, s.y + d.y};
          if (!p_.region.contains(c) || seen(c)) {
            ok = false;
            break;
          }
        }
        if (ok) add += phi_[k];
      }
    }
    sums_.push_back((sums_.empty() ? 0.0 : sums_.back()) + add);
    path_.push_back(s);
    visited_[cell(s)] = 1;
  }

  void pop() {
    visited_[cell(path_.back())] = 0;
    path_.pop_back();
    sums_.pop_back();
  }

  template <class Step>
  void for_each_step(Step&& step) {
    const Site c = path_.back();
    const int used = static_cast<int>(path_.size()) - 1;
    const int remaining = p_.cutoff - used - 1;
    for (const Site d : {Site{1, 0}, Site{0, 1}, Site{0, -1}, Site{-1, 0}}) {
      const Site n{c.x + d.x, c.y + d.y};
      if (!in_box(n) || visited_[cell(n)] != 0) continue;
      if (std::abs(p_.to.x - n.x) + std::abs(p_.to.y - n.y) > remaining) continue;
      step(n);
    }
  }

  template <class Visit>
  void extend(Visit& visit) {
    for_each_step([&](Site n) {
      push(n);
      if (n == p_.to) {
        visit(std::span<const Site>(path_), sums_.back());
      } else {
        extend(visit);
      }
      pop();
    });
  }

  void collect(std::vector<std::vector<Site>>& out, int depth) {
    for_each_step([&](Site n) {
      push(n);
      if (n == p_.to || static_cast<int>(path_.size()) - 1 == depth) {
        out.push_back(path_);
      } else {
        collect(out, depth);
      }
      pop();
    });
  }

  PathProblem p_;
  const WeightModel* model_;
  PathRegion box_;
  int w_ = 0;
  int h_ = 0;
  std::vector<std::uint8_t> visited_;
  std::vector<Site> path_;
  std::vector<double> sums_;
  std::vector<double> phi_;
};

}  // namespace detail

/// Runs visit(acc, path, cluster_sum) over every path, splitting the search
/// into independent prefixes. Each prefix gets its own accumulator; the
/// returned accumulators are in prefix order, so any reduction over them in
/// order is independent of the thread count.
template <class Acc, class Visit>
std::vector<Acc> enumerate_paths(const PathProblem& problem, const WeightModel* model,
                                 Visit visit, int threads = 1, int prefix_depth = 4) {
  detail::require(problem.cutoff >= 0, "enumerate_paths: negative cutoff");
  detail::PathSearch probe(problem, model);
  if (!probe.startable() || problem.min_length() > problem.cutoff) return {};
  const auto prefixes = probe.prefixes(prefix_depth);
  std::vector<Acc> accs(prefixes.size());
  auto work = [&](std::size_t k, detail::PathSearch& search) {
    search.run(prefixes[k], [&](std::span<const Site> path, double cluster_sum) {
      visit(accs[k], path, cluster_sum);
    });
  };
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(prefixes.size())));
  if (t == 1) {
    for (std::size_t k = 0; k < prefixes.size(); ++k) work(k, probe);
    return accs;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    pool.emplace_back([&, i] {
      try {
        detail::PathSearch search(problem, model);
        for (std::size_t k = next++; k < prefixes.size(); k = next++) work(k, search);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return accs;
}

/// Per-length totals of a truncated path sum.
struct LengthShells {
  std::vector<std::uint64_t> count;  // indexed by path length
  std::vector<double> weight;

  void add(std::size_t length, double w) {
    if (count.size() <= length) {
      count.resize(length + 1, 0);
      weight.resize(length + 1, 0.0);
    }
    ++count[length];
    weight[length] += w;
  }
  void merge(const LengthShells& o) {
    if (count.size() < o.count.size()) {
      count.resize(o.count.size(), 0);
      weight.resize(o.count.size(), 0.0);
    }
    for (std::size_t l = 0; l < o.count.size(); ++l) {
      count[l] += o.count[l];
      weight[l] += o.weight[l];
    }
  }
};

struct PathSum {
  double Z = 0.0;
  std::uint64_t path_count = 0;
  /// Estimated weight of the paths longer than the cutoff.
  double truncation_bound = 0.0;
  LengthShells shells;
  int min_length = 0;
  int cutoff = 0;
  bool feasible = true;
  std::string diagnostic;

  [[nodiscard]] double tail_fraction() const {
    return Z > 0.0 ? truncation_bound / Z : std::numeric_limits<double>::infinity();
  }
  /// Truncation tail below 1% of Z.
  [[nodiscard]] bool reliable() const { return feasible && tail_fraction() < 0.01; }
};

namespace detail {

// Tail beyond the cutoff assuming each further pair of steps multiplies the
// shell weight by r = max(observed last-shell ratio, (mu e^-beta)^2).
inline double geometric_tail(const LengthShells& shells, int min_length, int cutoff,
                             double beta) {
  const int K = cutoff - ((cutoff - min_length) % 2);
  if (K < min_length || static_cast<std::size_t>(K) >= shells.weight.size()) {
    return 0.0;
  }
  const double wk = shells.weight[static_cast<std::size_t>(K)];
  double r = std::pow(kSawConnectiveConstant * std::exp(-beta), 2.0);
  if (K - 2 >= min_length && shells.weight[static_cast<std::size_t>(K - 2)] > 0.0) {
    r = std::max(r, wk / shells.weight[static_cast<std::size_t>(K - 2)]);
  }
  if (r >= 1.0) return std::numeric_limits<double>::infinity();
  return wk * r / (1.0 - r);
}

inline PathSum summarize(const std::vector<LengthShells>& parts, const PathProblem& problem,
                         double beta) {
  PathSum out;
  out.min_length = problem.min_length();
  out.cutoff = problem.cutoff;
  for (const auto& p : parts) out.shells.merge(p);
  for (std::size_t l = 0; l < out.shells.count.size(); ++l) {
    out.path_count += out.shells.count[l];
    out.Z += out.shells.weight[l];
  }
  out.truncation_bound = geometric_tail(out.shells, out.min_length, out.cutoff, beta);
  return out;
}

}  // namespace detail

/// Weighted sum over all paths of the problem.
inline PathSum sum_paths(const PathProblem& problem, const WeightModel& model, int threads = 1) {
  model.validate();
  if (problem.min_length() > problem.cutoff) {
    PathSum out;
    out.feasible = false;
    out.min_length = problem.min_length();
    out.cutoff = problem.cutoff;
    out.diagnostic = "cutoff " + std::to_string(problem.cutoff) + " is below the shortest path length " +
                     std::to_string(problem.min_length());
    return out;
  }
  const double beta = model.beta;
  const auto parts = enumerate_paths<LengthShells>(
      problem, &model,
      [beta](LengthShells& acc, std::span<const Site> path, double cluster_sum) {
        const auto len = path.size() - 1;
        acc.add(len, std::exp(-beta * static_cast<double>(len) + cluster_sum));
      },
      threads);
  return detail::summarize(parts, problem, beta);
}

struct SemistripPathEnsemble {
  int N = 2;
  int u = 0;
  int v = 0;
  int length_cutoff = 4;

  [[nodiscard]] int min_length() const { return N + std::abs(u - v); }

  [[nodiscard]] PathProblem problem() const {
    PathProblem p;
    p.from = {0, u};
    p.to = {N, v};
    p.region = {0, N, 0, PathRegion::kUnbounded};
    p.cutoff = length_cutoff;
    return p;
  }
};

inline constexpr int kMaxEnsembleWidth = 10;
inline constexpr int kMaxExcessLength = 12;

/// Z(u -> v) in the upper semistrip, truncated at the ensemble's cutoff.
inline PathSum enumerate_Z(const SemistripPathEnsemble& e, const WeightModel& model,
                           int threads = 1) {
  detail::require(e.N >= 1 && e.N <= kMaxEnsembleWidth, "enumerate_Z: need 1 <= N <= 10");
  detail::require(e.u >= 0 && e.v >= 0, "enumerate_Z: endpoint heights must be >= 0");
  detail::require(e.length_cutoff - e.min_length() <= kMaxExcessLength,
                  "enumerate_Z: cutoff exceeds the shortest path by more than 12");
  return sum_paths(e.problem(), model, threads);
}

struct VerticalRatio {
  double ratio = 0.0;
  /// -log(ratio) / beta.
  double c = 0.0;
  /// Weight fraction of Z(v1, v2) whose first step goes down.
  double p1 = 0.0;
  PathSum upper;  // Z(v1, v2)
  PathSum lower;  // Z(v1 - 1, v2)

  [[nodiscard]] bool reliable() const { return upper.reliable() && lower.reliable(); }
};

/// Z(v1, v2) / Z(v1 - 1, v2) for paths from (0, v1) to (0, v2) in the
/// half-plane x >= 0, each truncated `excess` steps above its shortest path.
inline VerticalRatio vertical_ratio(int v1, int v2, const WeightModel& model, int excess,
                                    int threads = 1) {
  detail::require(v1 > v2 + 1, "vertical_ratio: need v1 > v2 + 1");
  detail::require(excess >= 0 && excess <= kMaxExcessLength,
                  "vertical_ratio: excess must be in [0, 12]");
  model.validate();
  const PathRegion half{0, PathRegion::kUnbounded, -PathRegion::kUnbounded,
                        PathRegion::kUnbounded};
  const PathProblem up{{0, v1}, {0, v2}, half, v1 - v2 + excess};
  const PathProblem down{{0, v1 - 1}, {0, v2}, half, v1 - 1 - v2 + excess};

  struct Acc {
    LengthShells shells;
    double first_down = 0.0;
  };
  const double beta = model.beta;
  auto visit = [beta](Acc& acc, std::span<const Site> path, double cluster_sum) {
    const auto len = path.size() - 1;
    const double w = std::exp(-beta * static_cast<double>(len) + cluster_sum);
    acc.shells.add(len, w);
    if (path[1].y < path[0].y) acc.first_down += w;
  };
  auto run = [&](const PathProblem& p, double* first_down) {
    const auto accs = enumerate_paths<Acc>(p, &model, visit, threads);
    std::vector<LengthShells> shells;
    double fd = 0.0;
    for (const auto& a : accs) {
      shells.push_back(a.shells);
      fd += a.first_down;
    }
    if (first_down != nullptr) *first_down = fd;
    return detail::summarize(shells, p, beta);
  };
  VerticalRatio out;
  double first_down = 0.0;
  out.upper = run(up, &first_down);
  out.lower = run(down, nullptr);
  out.ratio = out.upper.Z / out.lower.Z;
  out.c = -std::log(out.ratio) / beta;
  out.p1 = first_down / out.upper.Z;
  return out;
}

struct EndpointRatio {
  double ratio = 0.0;
  PathSum raised;  // Z(u -> v + 1)
  PathSum base;    // Z(u -> v)

  [[nodiscard]] bool reliable() const { return raised.reliable() && base.reliable(); }
};

/// Z(u -> v + 1) / Z(u -> v), both truncated `excess` steps above their
/// shortest paths.
inline EndpointRatio endpoint_ratio(int N, int u, int v, const WeightModel& model, int excess,
                                    int threads = 1) {
  detail::require(excess >= 0, "endpoint_ratio: excess must be >= 0");
  EndpointRatio out;
  const SemistripPathEnsemble hi{N, u, v + 1, N + std::abs(u - v - 1) + excess};
  const SemistripPathEnsemble lo{N, u, v, N + std::abs(u - v) + excess};
  out.raised = enumerate_Z(hi, model, threads);
  out.base = enumerate_Z(lo, model, threads);
  out.ratio = out.raised.Z / out.base.Z;
  return out;
}

struct FourArcResult {
  /// Sum over self-avoiding loops assembled from the four arcs.
  double Z_full = 0.0;
  /// exp(-beta (u1 + u2 + v1 + v2 + 4)) Z(u1 -> v1) Z(u2 -> v2).
  double Z_product = 0.0;
  /// |log(Z_full / Z_product)|.
  double epsilon = 0.0;
  std::uint64_t loops = 0;
};

namespace detail {

// Where the interior vertices of one arc may go. `avoid_segment` forbids the
// segment row {0 < x < N, y = 0}.
struct ArcRule {
  Site target;
  PathRegion region;
  bool avoid_segment = true;
};

// Depth-first search over closed loops made of consecutive arcs, sharing one
// visited set. The last arc returns to the starting vertex.
class LoopSearch {
 public:
  LoopSearch(Site start, std::vector<ArcRule> arcs, int N, int budget)
      : start_(start), arcs_(std::move(arcs)), N_(N), budget_(budget) {
    int reach = 0;
    Site p = start;
    for (const auto& a : arcs_) {
      min_rest_.push_back(0);
      reach += std::abs(a.target.x - p.x) + std::abs(a.target.y - p.y);
      p = a.target;
    }
    // Minimal length still needed after finishing arc k.
    for (std::size_t k = 0; k < arcs_.size(); ++k) {
      int rest = 0;
      for (std::size_t j = k + 1; j < arcs_.size(); ++j) {
        rest += std::abs(arcs_[j].target.x - arcs_[j - 1].target.x) +
                std::abs(arcs_[j].target.y - arcs_[j - 1].target.y);
      }
      min_rest_[k] = rest;
    }
    const int r = budget_;
    x0_ = start.x - r;
    y0_ = start.y - r;
    w_ = 2 * r + 1;
    visited_.assign(static_cast<std::size_t>(w_ * w_), 0);
  }

  // visit(length) once per loop.
  template <class Visit>
  void run(Visit&& visit) {
    mark(start_, 1);
    step(start_, 0, 0, visit);
    mark(start_, 0);
  }

 private:
  [[nodiscard]] bool in_window(Site s) const {
    return s.x >= x0_ && s.x < x0_ + w_ && s.y >= y0_ && s.y < y0_ + w_;
  }
  [[nodiscard]] std::size_t cell(Site s) const {
    return static_cast<std::size_t>((s.y - y0_) * w_ + (s.x - x0_));
  }
  void mark(Site s, std::uint8_t v) { visited_[cell(s)] = v; }

  template <class Visit>
  void step(Site c, std::size_t arc, int used, Visit& visit) {
    const ArcRule& rule = arcs_[arc];
    for (const Site d : {Site{1, 0}, Site{0, 1}, Site{0, -1}, Site{-1, 0}}) {
      const Site n{c.x + d.x, c.y + d.y};
      const int len = used + 1;
      if (!in_window(n)) continue;
      const int to_target = std::abs(rule.target.x - n.x) + std::abs(rule.target.y - n.y);
      if (len + to_target + min_rest_[arc] > budget_) continue;
      if (n == rule.target) {
        if (arc + 1 == arcs_.size()) {
          visit(len);
        } else if (visited_[cell(n)] == 0) {
          mark(n, 1);
          step(n, arc + 1, len, visit);
          mark(n, 0);
        }
        continue;
      }
      if (visited_[cell(n)] != 0 || !rule.region.contains(n)) continue;
      if (rule.avoid_segment && n.y == 0 && n.x > 0 && n.x < N_) continue;
      mark(n, 1);
      step(n, arc, len, visit);
      mark(n, 0);
    }
  }

  Site start_;
  std::vector<ArcRule> arcs_;
  int N_;
  int budget_;
  std::vector<int> min_rest_;
  int x0_ = 0, y0_ = 0, w_ = 0;
  std::vector<std::uint8_t> visited_;
};

// Per-length counts of arcs joining `from` to `rule.target`.
inline std::vector<std::uint64_t> arc_counts(Site from, const ArcRule& rule, int N, int budget) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(budget + 1), 0);
  // A lone arc is a loop search whose single arc ends at a fresh vertex.
  LoopSearch search(from, {rule}, N, budget);
  search.run([&](int len) { ++counts[static_cast<std::size_t>(len)]; });
  return counts;
}

}  // namespace detail

/// Loops around the segment {0 < x < N, y = 0}, cut at the lines x = 0 (L)
/// and x = N (R). The upper arc runs from (0, 1 + u1) to (N, 1 + v1) with all
/// other vertices in {0 < x < N, y >= 1}; the lower arc from (N, -1 - v2) to
/// (0, -1 - u2) in {0 < x < N, y <= -1}. The east arc joins the upper arc to
/// the lower one without touching L, the west arc closes the loop without
/// touching R; neither crosses the segment. The loop must be self-avoiding.
/// Loops and the product of the two strip sums are both truncated at
/// `excess` steps above the shortest total length. Bare weights only.
inline FourArcResult four_arc_factorization(int N, int u1, int u2, int v1, int v2, double beta,
                                            int excess) {
  detail::require(N >= 1 && N <= kMaxEnsembleWidth, "four_arc_factorization: need 1 <= N <= 10");
  detail::require(u1 >= 0 && u2 >= 0 && v1 >= 0 && v2 >= 0,
                  "four_arc_factorization: heights must be >= 0");
  detail::require(excess >= 0 && excess <= kMaxExcessLength,
                  "four_arc_factorization: excess must be in [0, 12]");
  detail::require(beta > 0.0, "four_arc_factorization: beta must be > 0");
  const int inf = PathRegion::kUnbounded;
  const Site a{0, 1 + u1}, b{N, 1 + v1}, c{N, -1 - v2}, d{0, -1 - u2};
  const detail::ArcRule upper{b, {1, N - 1, 1, inf}, true};
  const detail::ArcRule east{c, {1, inf, -inf, inf}, true};
  const detail::ArcRule lower{d, {1, N - 1, -inf, -1}, true};
  const detail::ArcRule west{a, {-inf, N - 1, -inf, inf}, true};

  const int m1 = N + std::abs(u1 - v1);
  const int m2 = N + std::abs(u2 - v2);
  const int ends = u1 + u2 + v1 + v2 + 4;
  const int budget = m1 + m2 + ends + excess;

  FourArcResult out;
  std::vector<std::uint64_t> loop_counts(static_cast<std::size_t>(budget + 1), 0);
  detail::LoopSearch loops(a, {upper, east, lower, west}, N, budget);
  loops.run([&](int len) { ++loop_counts[static_cast<std::size_t>(len)]; });
  for (std::size_t l = 0; l < loop_counts.size(); ++l) {
    out.loops += loop_counts[l];
    out.Z_full += static_cast<double>(loop_counts[l]) * std::exp(-beta * static_cast<double>(l));
  }

  const auto w1 = detail::arc_counts(a, upper, N, m1 + excess);
  const auto w2 = detail::arc_counts(c, lower, N, m2 + excess);
  for (int l1 = m1; l1 <= m1 + excess; ++l1) {
    for (int l2 = m2; l2 <= m2 + (excess - (l1 - m1)); ++l2) {
      out.Z_product += static_cast<double>(w1[static_cast<std::size_t>(l1)]) *
                       static_cast<double>(w2[static_cast<std::size_t>(l2)]) *
                       std::exp(-beta * static_cast<double>(l1 + l2 + ends));
    }
  }
  out.epsilon = std::abs(std::log(out.Z_full / out.Z_product));
  return out;
}

/// Exact sampler for the x-monotone paths (no westward step) of a semistrip
/// ensemble with bare weights. Tables of completion weights are built once;
/// each draw walks forward choosing the next column's entry height.
class DirectedPathSampler {
 public:
  DirectedPathSampler(const SemistripPathEnsemble& e, const WeightModel& model) : e_(e) {
    model.validate();
    detail::require(!model.has_clusters(),
                    "DirectedPathSampler: cluster factors do not factorize over columns");
    detail::require(e.N >= 1 && e.u >= 0 && e.v >= 0, "DirectedPathSampler: bad ensemble");
    detail::require(e.length_cutoff >= e.min_length(),
                    "DirectedPathSampler: cutoff below the shortest path");
    beta_ = model.beta;
    R_ = e.length_cutoff;
    H_ = (R_ - e.N + e.u + e.v) / 2;
    // G[x][h][r]: weight of completions from the entry of column x at height
    // h with r steps left.
    G_.assign(static_cast<std::size_t>((e.N + 1) * (H_ + 1) * (R_ + 1)), 0.0);
    for (int h = 0; h <= H_; ++h) {
      for (int r = 0; r <= R_; ++r) {
        const int d = std::abs(e.v - h);
        if (d <= r) g(e.N, h, r) = std::exp(-beta_ * d);
      }
    }
    for (int x = e.N - 1; x >= 0; --x) {
      for (int h = 0; h <= H_; ++h) {
        for (int r = 0; r <= R_; ++r) {
          double s = 0.0;
          for (int h2 = 0; h2 <= H_; ++h2) {
            const int cost = std::abs(h2 - h) + 1;
            if (cost <= r) s += std::exp(-beta_ * cost) * g(x + 1, h2, r - cost);
          }
          g(x, h, r) = s;
        }
      }
    }
  }

  /// Total weight of the monotone paths.
  [[nodiscard]] double Z() const { return g(0, e_.u, R_); }

  [[nodiscard]] std::vector<Site> sample(Rng& rng) const {
    std::vector<Site> path{{0, e_.u}};
    int h = e_.u;
    int r = R_;
    auto vertical = [&](int x, int from, int to) {
      const int step = to > from ? 1 : -1;
      for (int y = from; y != to; y += step) path.push_back({x, y + step});
    };
    for (int x = 0; x < e_.N; ++x) {
      const double total = g(x, h, r);
      double target = uniform01(rng) * total;
      int chosen = -1;
      for (int h2 = 0; h2 <= H_; ++h2) {
        const int cost = std::abs(h2 - h) + 1;
        if (cost > r) continue;
        const double w = std::exp(-beta_ * cost) * g(x + 1, h2, r - cost);
        if (w <= 0.0) continue;
        chosen = h2;
        if (target < w) break;
        target -= w;
      }
      detail::require(chosen >= 0, "DirectedPathSampler: empty ensemble");
      vertical(x, h, chosen);
      path.push_back({x + 1, chosen});
      r -= std::abs(chosen - h) + 1;
      h = chosen;
    }
    vertical(e_.N, h, e_.v);
    return path;
  }

 private:
  [[nodiscard]] double& g(int x, int h, int r) {
    return G_[static_cast<std::size_t>((x * (H_ + 1) + h) * (R_ + 1) + r)];
  }
  [[nodiscard]] double g(int x, int h, int r) const {
    return G_[static_cast<std::size_t>((x * (H_ + 1) + h) * (R_ + 1) + r)];
  }

  SemistripPathEnsemble e_;
  double beta_ = 1.0;
  int R_ = 0;
  int H_ = 0;
  std::vector<double> G_;
};

inline std::vector<Site> sample_directed_path(const SemistripPathEnsemble& e,
                                              const WeightModel& model, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  return DirectedPathSampler(e, model).sample(rng);
}

inline void write_ensemble_csv_header(std::ostream& out) {
  out << "N,u,v,beta,cutoff,Z,truncation_bound,path_count\n";
}

inline void write_ensemble_csv_row(std::ostream& out, const SemistripPathEnsemble& e, double beta,
                                   const PathSum& s) {
  out << e.N << ',' << e.u << ',' << e.v << ',' << beta << ',' << e.length_cutoff << ','
      << s.Z << ',' << s.truncation_bound << ',' << s.path_count << '\n';
}

}  // namespace schn
