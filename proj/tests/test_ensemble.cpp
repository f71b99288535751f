#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "schn/ensemble.hpp"

using namespace schn;

namespace {

WeightModel bare(double beta) { return WeightModel{beta, {}, {}}; }

// Every step sequence up to the cutoff, kept when it is self-avoiding, stays
// in the region and first reaches the target at its last step.
std::map<int, std::uint64_t> brute_counts(const PathProblem& p) {
  std::map<int, std::uint64_t> out;
  const Site dirs[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (int len = 0; len <= p.cutoff; ++len) {
    std::uint64_t total = 1;
    for (int k = 0; k < len; ++k) total *= 4;
    for (std::uint64_t code = 0; code < total; ++code) {
      std::set<Site> seen{p.from};
      Site c = p.from;
      bool ok = p.region.contains(c) && (len > 0 || c == p.to);
      std::uint64_t rest = code;
      for (int k = 0; k < len && ok; ++k) {
        if (c == p.to) ok = false;
        const Site d = dirs[rest % 4];
        rest /= 4;
        c = {c.x + d.x, c.y + d.y};
        if (!p.region.contains(c) || !seen.insert(c).second) ok = false;
      }
      if (ok && c == p.to) ++out[len];
    }
  }
  return out;
}

std::uint64_t binomial(int n, int k) {
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

}  // namespace

TEST(EnumerateZ, ThreeOneBumpExcursions) {
  const double beta = 1.3;
  const auto s = enumerate_Z({2, 0, 0, 4}, bare(beta));
  EXPECT_EQ(s.shells.count[2], 1u);
  EXPECT_EQ(s.shells.count[4], 3u);
  EXPECT_EQ(s.path_count, 4u);
  EXPECT_NEAR(s.Z, std::exp(-2 * beta) + 3 * std::exp(-4 * beta), 1e-15);
}

TEST(EnumerateZ, MatchesBruteStepSequences) {
  for (int N : {1, 2, 3}) {
    for (int u : {0, 1, 2}) {
      for (int v : {0, 1, 3}) {
        const SemistripPathEnsemble e{N, u, v, N + std::abs(u - v) + 4};
        if (e.length_cutoff > 9) continue;
        const auto s = enumerate_Z(e, bare(1.0));
        const auto oracle = brute_counts(e.problem());
        for (const auto& [len, n] : oracle) {
          ASSERT_LT(static_cast<std::size_t>(len), s.shells.count.size());
          EXPECT_EQ(s.shells.count[static_cast<std::size_t>(len)], n)
              << "N=" << N << " u=" << u << " v=" << v << " len=" << len;
        }
        std::uint64_t total = 0;
        for (const auto& [len, n] : oracle) total += n;
        EXPECT_EQ(s.path_count, total);
      }
    }
  }
}

TEST(EnumerateZ, LowTemperatureCountsShortestPaths) {
  const double beta = 30.0;
  for (int N : {2, 4, 6}) {
    for (int u : {0, 2}) {
      for (int v : {0, 1, 3}) {
        const SemistripPathEnsemble e{N, u, v, N + std::abs(u - v) + 4};
        const auto s = enumerate_Z(e, bare(beta));
        const double shortest = static_cast<double>(binomial(e.min_length(), N));
        EXPECT_NEAR(s.Z * std::exp(beta * e.min_length()), shortest, 1e-9 * shortest);
      }
    }
  }
}

TEST(EnumerateZ, DecreasingInBeta) {
  const SemistripPathEnsemble e{4, 1, 2, 13};
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    const double z = enumerate_Z(e, bare(beta)).Z;
    EXPECT_LT(z, prev);
    prev = z;
  }
}

TEST(EnumerateZ, ZeroAmplitudeClustersAreIdentity) {
  const SemistripPathEnsemble e{4, 1, 0, 11};
  WeightModel m = bare(1.5);
  m.clusters = SyntheticClusters{0.0, 0.0};
  EXPECT_EQ(enumerate_Z(e, m).Z, enumerate_Z(e, bare(1.5)).Z);
}

TEST(EnumerateZ, ClusterSumMatchesSubsetOracle) {
  // Single path (0,0) -> (1,0); clusters in [0,1] x [0, inf) with at most 4
  // sites. Oracle: all connected subsets of the 2 x 4 window touching y = 0.
  const double beta = 1.0, amplitude = 0.7, rate = 2.5;
  double phi = 0.0;
  std::vector<Site> cells;
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x <= 1; ++x) cells.push_back({x, y});
  }
  for (unsigned mask = 1; mask < (1u << cells.size()); ++mask) {
    std::vector<Site> set;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (mask & (1u << k)) set.push_back(cells[k]);
    }
    if (set.size() > 4) continue;
    bool touches = false;
    int x0 = 9, x1 = -9, y0 = 9, y1 = -9;
    for (const Site s : set) {
      touches = touches || s.y == 0;
      x0 = std::min(x0, s.x);
      x1 = std::max(x1, s.x);
      y0 = std::min(y0, s.y);
      y1 = std::max(y1, s.y);
    }
    if (!touches) continue;
    std::set<Site> reached{set[0]};
    for (bool grew = true; grew;) {
      grew = false;
      for (const Site s : set) {
        if (reached.count(s)) continue;
        for (const Site r : reached) {
          if (std::abs(r.x - s.x) + std::abs(r.y - s.y) == 1) {
            reached.insert(s);
            grew = true;
            break;
          }
        }
      }
    }
    if (reached.size() != set.size()) continue;
    phi += amplitude * std::exp(-rate * std::max(x1 - x0, y1 - y0));
  }
  WeightModel m = bare(beta);
  m.clusters = SyntheticClusters{amplitude, rate};
  const auto s = enumerate_Z({1, 0, 0, 1}, m);
  EXPECT_NEAR(s.Z, std::exp(-beta + phi), 1e-14);
}

TEST(EnumerateZ, ThreadCountDoesNotChangeBits) {
  WeightModel m = bare(1.5);
  m.clusters = SyntheticClusters{-0.4, 0.0};
  const SemistripPathEnsemble e{6, 1, 2, 15};
  const auto one = enumerate_Z(e, m, 1);
  const auto four = enumerate_Z(e, m, 4);
  EXPECT_EQ(one.Z, four.Z);
  EXPECT_EQ(one.path_count, four.path_count);
  EXPECT_NE(one.Z, enumerate_Z(e, bare(1.5)).Z);
}

TEST(EnumerateZ, TruncationTailShrinksWithCutoff) {
  double prev = 1.0;
  for (int excess : {4, 6, 8, 10}) {
    const auto s = enumerate_Z({6, 0, 0, 6 + excess}, bare(1.5));
    EXPECT_LT(s.tail_fraction(), prev);
    prev = s.tail_fraction();
  }
  EXPECT_TRUE(enumerate_Z({6, 0, 0, 16}, bare(1.5)).reliable());
  // Below the growth threshold the estimate is unbounded and flagged.
  EXPECT_FALSE(enumerate_Z({4, 0, 0, 8}, bare(0.8)).reliable());
}

TEST(EnumerateZ, InfeasibleAndRejected) {
  const auto s = enumerate_Z({4, 0, 3, 6}, bare(1.0));
  EXPECT_FALSE(s.feasible);
  EXPECT_EQ(s.Z, 0.0);
  EXPECT_FALSE(s.diagnostic.empty());
  EXPECT_THROW(enumerate_Z({11, 0, 0, 12}, bare(1.0)), Error);
  EXPECT_THROW(enumerate_Z({4, -1, 0, 6}, bare(1.0)), Error);
  EXPECT_THROW(enumerate_Z({4, 0, 0, 17}, bare(1.0)), Error);
  WeightModel loud = bare(1.0);
  loud.clusters = SyntheticClusters{1.5, 0.0};
  EXPECT_THROW(enumerate_Z({2, 0, 0, 4}, loud), Error);
  WeightModel slow = bare(1.0);
  slow.clusters = SyntheticClusters{0.5, 1.0};
  EXPECT_THROW(enumerate_Z({2, 0, 0, 4}, slow), Error);
}

TEST(VerticalRatio, BoundAndFirstStep) {
  double prev_c = 0.0, prev_p1 = 0.0;
  for (double beta : {1.5, 2.0, 3.0}) {
    const auto r = vertical_ratio(3, 0, bare(beta), 10);
    EXPECT_TRUE(r.reliable());
    EXPECT_LE(r.ratio, std::exp(-0.8 * beta));
    EXPECT_GT(r.c, prev_c);
    EXPECT_GT(r.p1, prev_p1);
    prev_c = r.c;
    prev_p1 = r.p1;
  }
  EXPECT_GE(vertical_ratio(3, 0, bare(2.0), 10).p1, 0.8);
}

TEST(VerticalRatio, LowTemperatureLimit) {
  const double beta = 25.0;
  const auto r = vertical_ratio(4, 1, bare(beta), 6);
  EXPECT_NEAR(r.ratio / std::exp(-beta), 1.0, 1e-9);
  EXPECT_NEAR(r.p1, 1.0, 1e-9);
  EXPECT_THROW(vertical_ratio(2, 1, bare(1.0), 4), Error);
}

TEST(EndpointRatio, RaisingEndpointLowersZ) {
  EXPECT_LT(endpoint_ratio(4, 0, 0, bare(1.5), 10).ratio, 1.0);
  const double beta = 25.0;
  // One extra vertical step separates the shortest paths.
  const auto r = endpoint_ratio(4, 2, 2, bare(beta), 6);
  EXPECT_NEAR(r.ratio / std::exp(-beta), static_cast<double>(binomial(5, 4)), 1e-6);
}

TEST(FourArc, EpsilonShrinksWithBeta) {
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {1.5, 2.0, 3.0}) {
    const auto r = four_arc_factorization(4, 1, 0, 0, 1, beta, 6);
    ASSERT_GT(r.loops, 0u);
    EXPECT_LT(r.epsilon, prev) << "beta " << beta;
    prev = r.epsilon;
  }
  EXPECT_LT(four_arc_factorization(4, 1, 0, 0, 1, 12.0, 4).epsilon, 1e-3);
}

TEST(FourArc, MatchesExplicitLoopAssembly) {
  // Oracle: enumerate each arc separately, filter interiors, then test the
  // concatenation for self-avoidance and the total length budget.
  const int N = 2, u1 = 0, u2 = 1, v1 = 1, v2 = 0, excess = 3;
  const double beta = 1.2;
  const int inf = PathRegion::kUnbounded;
  const Site a{0, 1 + u1}, b{N, 1 + v1}, c{N, -1 - v2}, d{0, -1 - u2};
  auto arcs = [&](const PathProblem& p, auto interior_ok) {
    std::vector<std::vector<Site>> out;
    const auto parts = enumerate_paths<std::vector<std::vector<Site>>>(
        p, nullptr, [](auto& acc, std::span<const Site> path, double) {
          acc.emplace_back(path.begin(), path.end());
        });
    for (const auto& part : parts) {
      for (const auto& path : part) {
        bool ok = true;
        for (std::size_t k = 1; k + 1 < path.size(); ++k) ok = ok && interior_ok(path[k]);
        if (ok) out.push_back(path);
      }
    }
    return out;
  };
  auto off_segment = [&](Site s) { return !(s.y == 0 && s.x > 0 && s.x < N); };
  auto in_strip = [&](Site s) { return s.x > 0 && s.x < N; };
  const int m1 = N + std::abs(u1 - v1), m2 = N + std::abs(u2 - v2);
  const int mv = v1 + v2 + 2, mu = u1 + u2 + 2;
  const auto A1 = arcs({a, b, {0, N, 1, inf}, m1 + excess}, in_strip);
  const auto A2 = arcs({c, d, {0, N, -inf, -1}, m2 + excess}, in_strip);
  const auto AV = arcs({b, c, {1, inf, -inf, inf}, mv + excess}, off_segment);
  const auto AU = arcs({d, a, {-inf, N - 1, -inf, inf}, mu + excess}, off_segment);
  // AU's interior may not touch R; AV's may not touch L. Both are enforced by
  // the regions since the endpoints sit on the opposite line.
  const std::size_t budget = static_cast<std::size_t>(m1 + m2 + mv + mu + excess);
  double z = 0.0;
  std::uint64_t count = 0;
  for (const auto& g1 : A1) {
    for (const auto& gv : AV) {
      for (const auto& g2 : A2) {
        for (const auto& gu : AU) {
          const std::size_t len = g1.size() + gv.size() + g2.size() + gu.size() - 4;
          if (len > budget) continue;
          std::set<Site> seen;
          bool ok = true;
          for (const auto* arc : {&g1, &gv, &g2, &gu}) {
            for (std::size_t k = 0; k + 1 < arc->size() && ok; ++k) {
              ok = seen.insert((*arc)[k]).second;
            }
          }
          if (!ok) continue;
          z += std::exp(-beta * static_cast<double>(len));
          ++count;
        }
      }
    }
  }
  const auto r = four_arc_factorization(N, u1, u2, v1, v2, beta, excess);
  ASSERT_GT(count, 0u);
  EXPECT_EQ(r.loops, count);
  EXPECT_NEAR(r.Z_full, z, 1e-12 * z);
}

TEST(DirectedSampler, MatchesMonotoneEnumeration) {
  const SemistripPathEnsemble e{4, 1, 2, 11};
  const WeightModel m = bare(1.0);
  // Exact max-height law of the x-monotone paths.
  std::map<int, double> exact;
  double z = 0.0;
  const auto parts = enumerate_paths<std::map<int, double>>(
      e.problem(), nullptr, [&](auto& acc, std::span<const Site> path, double) {
        int top = 0;
        for (std::size_t k = 0; k < path.size(); ++k) {
          if (k > 0 && path[k].x < path[k - 1].x) return;
          top = std::max(top, path[k].y);
        }
        acc[top] += std::exp(-m.beta * static_cast<double>(path.size() - 1));
      });
  for (const auto& part : parts) {
    for (const auto& [h, w] : part) {
      exact[h] += w;
      z += w;
    }
  }
  const DirectedPathSampler sampler(e, m);
  EXPECT_NEAR(sampler.Z(), z, 1e-12 * z);

  Rng rng = make_stream(31, 0);
  const int n = 100000;
  std::map<int, double> seen;
  for (int i = 0; i < n; ++i) {
    const auto path = sampler.sample(rng);
    int top = 0;
    for (const Site s : path) top = std::max(top, s.y);
    seen[top] += 1.0 / n;
  }
  double tv = 0.0;
  for (const auto& [h, w] : exact) tv += std::abs(w / z - seen[h]);
  for (const auto& [h, f] : seen) {
    if (!exact.count(h)) tv += f;
  }
  EXPECT_LT(0.5 * tv, 0.02);
}

TEST(DirectedSampler, StraightAtLowTemperatureAndDeterministic) {
  const SemistripPathEnsemble e{5, 0, 0, 11};
  const auto path = sample_directed_path(e, bare(20.0), 3);
  ASSERT_EQ(path.size(), 6u);
  for (int x = 0; x <= 5; ++x) EXPECT_EQ(path[static_cast<std::size_t>(x)], (Site{x, 0}));
  const SemistripPathEnsemble warm{5, 1, 3, 13};
  EXPECT_EQ(sample_directed_path(warm, bare(0.7), 9), sample_directed_path(warm, bare(0.7), 9));
  WeightModel m = bare(1.0);
  m.clusters = SyntheticClusters{0.1, 0.0};
  EXPECT_THROW(DirectedPathSampler(e, m), Error);
}
