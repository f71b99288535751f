#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "schn/walk.hpp"

using namespace schn;

TEST(Steps, ParametricNormalisedAndVariance) {
  const double c = std::log(2.0);
  const auto s = parametric_steps(c, 0.5);
  EXPECT_NEAR(s.total(), 1.0, 1e-12);
  // theta and zeta factorise, so Var(zeta) is a one-dimensional sum.
  double z = 0.0, m2 = 0.0;
  for (int k = -60; k <= 60; ++k) {
    z += std::exp(-c * std::abs(k));
    m2 += k * k * std::exp(-c * std::abs(k));
  }
  EXPECT_NEAR(s.var_zeta(), m2 / z, 1e-12);
  EXPECT_NEAR(s.mean_zeta(), 0.0, 1e-15);
  for (const auto& st : s.steps) EXPECT_GE(st.theta, 1);
}

TEST(Steps, InfiniteRateFreezesZeta) {
  const auto s = parametric_steps(std::numeric_limits<double>::infinity(), 0.3);
  EXPECT_EQ(s.max_abs_zeta(), 0);
  EXPECT_NEAR(s.total(), 1.0, 1e-12);
  EXPECT_THROW(parametric_steps(0.0, 0.5), Error);
  EXPECT_THROW(parametric_steps(1.0, 1.0), Error);
}

TEST(Animals, CountsMatchBruteForce) {
  const auto fast = enumerate_animals(8);
  const auto brute = oracle::brute_animals(8);
  ASSERT_EQ(fast.counts.size(), brute.size());
  for (const auto& [key, counts] : brute) {
    ASSERT_TRUE(fast.counts.count(key)) << key.first << "," << key.second;
    EXPECT_EQ(fast.counts.at(key), counts) << key.first << "," << key.second;
  }
}

TEST(Animals, ReflectionSymmetric) {
  const auto s = build_steps_from_animals(WeightModel{1.7, {}, {}}, 10);
  for (const auto& st : s.steps) EXPECT_EQ(st.weight, s.probability(st.theta, -st.zeta));
  EXPECT_NEAR(s.total(), 1.0, 1e-12);
}

TEST(Animals, LowTemperatureConcentratesOnUnitStep) {
  const auto s = build_steps_from_animals(WeightModel{25.0, {}, {}}, 8);
  EXPECT_GT(s.probability(1, 0), 1.0 - 1e-9);
}

TEST(Animals, LocalisationGrowsWithBeta) {
  double prev = 0.0;
  for (double beta : {1.5, 2.0, 3.0}) {
    const auto s = build_steps_from_animals(WeightModel{beta, {}, {}}, 8);
    const auto loc = fit_localization(s);
    ASSERT_TRUE(loc.has_value());
    EXPECT_GT(loc->rate, prev) << "beta " << beta;
    EXPECT_GT(loc->r2, 0.98);
    prev = loc->rate;
    // The envelope holds on every height.
    const auto marg = s.zeta_marginal();
    const int z = s.max_abs_zeta();
    for (int k = -z; k <= z; ++k) {
      EXPECT_LE(marg[static_cast<std::size_t>(k + z)], loc->amplitude * std::exp(-loc->rate * std::abs(k)) * (1 + 1e-12));
    }
  }
}

TEST(Animals, CutoffTooSmallIsFlagged) {
  EXPECT_TRUE(build_steps_from_animals(WeightModel{1.5, {}, {}}, 8).flagged);
  EXPECT_FALSE(build_steps_from_animals(WeightModel{1.5, {}, {}}, 10).flagged);
  EXPECT_THROW(build_steps_from_animals(WeightModel{2.0, {}, SyntheticClusters{0.5, 0.0}}, 8), Error);
  EXPECT_THROW(enumerate_animals(11), Error);
}

TEST(Ballot, ExactCountsMatchReflection) {
  using oracle::cpp_int;
  const std::vector<WeightedStep<cpp_int>> steps{{1, -1, cpp_int(1)}, {1, 1, cpp_int(1)}};
  for (int n = 0; n <= 60; n += 3) {
    for (int u = 1; u <= 8; ++u) {
      const auto row = ballot_weights<cpp_int>(n, u, steps, std::max(u + n + 1, 9));
      for (int v = 1; v <= 8; ++v) {
        EXPECT_EQ(row[static_cast<std::size_t>(v)], oracle::reflection_count(n, u, v))
            << n << " " << u << " " << v;
      }
    }
  }
}

TEST(Ballot, SimpleWalkProbabilityMatchesReflection) {
  const auto s = simple_steps();
  for (int n : {16, 64, 200}) {
    for (int u : {1, 2, 5}) {
      for (int v : {1, 3, 4, 7}) {
        const auto r = ballot_dp(n, u, v, s);
        const double exact =
            static_cast<double>(oracle::reflection_count(n, u, v)) / std::pow(2.0, n);
        EXPECT_NEAR(r.probability, exact, 1e-12 * std::max(exact, 1e-300));
        EXPECT_FALSE(r.flagged);
      }
    }
  }
}

TEST(Ballot, SingleStep) {
  const auto s = parametric_steps(1.1, 0.4);
  for (int u = 1; u <= 4; ++u) {
    for (int v = 1; v <= 4; ++v) {
      EXPECT_NEAR(ballot_dp(1, u, v, s, 8).probability, s.probability(1, v - u), 1e-15);
    }
  }
}

TEST(Ballot, ForwardMatchesBackwardRecursion) {
  const auto s = build_steps_from_animals(WeightModel{1.5, {}, {}}, 10);
  for (int u : {1, 3}) {
    for (int v : {1, 2, 5}) {
      oracle::BackwardBallot back(s, v, 40);
      const auto r = ballot_dp(30, u, v, s, 40);
      EXPECT_NEAR(r.probability, back(30, u), 1e-13 * back(30, u));
    }
  }
}

TEST(Ballot, DpAgreesWithMonteCarlo) {
  const auto s = parametric_steps(1.0, 0.3);
  int agree = 0, total = 0;
  for (int N : {4, 10}) {
    for (int u : {1, 3}) {
      for (int v : {1, 2, 4}) {
        const auto dp = ballot_dp(N, u, v, s);
        const auto mc = ballot_mc(N, u, v, s, 100000, 1234 + N * 100 + u * 10 + v, 4);
        ++total;
        if (std::abs(dp.probability - mc.probability) <= 3.0 * std::max(mc.std_error, 1e-5)) ++agree;
      }
    }
  }
  EXPECT_GE(agree, total - 1);
}

TEST(Ballot, MonteCarloDeterministicAcrossThreads) {
  const auto s = parametric_steps(1.0, 0.5);
  const auto a = ballot_mc(12, 2, 2, s, 20000, 77, 1);
  const auto b = ballot_mc(12, 2, 2, s, 20000, 77, 3);
  EXPECT_EQ(a.probability, b.probability);
  EXPECT_EQ(a.method, BallotMethod::mc);
}

TEST(Ballot, MonteCarloSingleStepFrequency) {
  const auto s = parametric_steps(0.8, 0.5);
  const auto mc = ballot_mc(1, 2, 3, s, 200000, 5);
  const double p = s.probability(1, 1);
  EXPECT_NEAR(mc.probability, p, 3.0 * std::sqrt(p * (1 - p) / 200000.0));
}

TEST(Ballot, Rejections) {
  const auto s = simple_steps();
  EXPECT_THROW(ballot_dp(64, 1, 1, s, 10), Error);
  EXPECT_THROW(ballot_dp(4, 0, 1, s), Error);
  EXPECT_THROW(ballot_dp(4, 1, 0, s), Error);
}

TEST(Harmonic, UnitStepsGiveIdentity) {
  const auto s = simple_steps();
  for (int x = 1; x <= 40; ++x) {
    const auto h = h_plus(x, s);
    EXPECT_NEAR(h.value, x, 1e-9);
    EXPECT_FALSE(h.flagged);
  }
}

TEST(Harmonic, GeometricJumpsHaveMemorylessOvershoot) {
  // Downward jumps are geometric, so -Z_tau is geometric with ratio e^{-c}
  // whatever the start: h+(x) = x + r / (1 - r).
  for (double c : {std::log(2.0), 1.3}) {
    const auto s = parametric_steps(c, 0.5);
    const double r = std::exp(-c);
    for (int x : {1, 2, 7, 20}) {
      const auto h = h_plus(x, s);
      EXPECT_NEAR(h.value, x + r / (1 - r), 1e-8) << c << " " << x;
      EXPECT_FALSE(h.flagged);
    }
  }
}

TEST(Harmonic, MonotoneAndSymmetric) {
  const auto s = build_steps_from_animals(WeightModel{1.5, {}, {}}, 10);
  double prev = 0.0;
  for (int x = 1; x <= 40; ++x) {
    const auto h = h_plus(x, s);
    EXPECT_GE(h.value, prev);
    EXPECT_NEAR(h_minus(x, s).value, h.value, 1e-10);
    prev = h.value;
  }
}

TEST(Scaling, SimpleWalkExponent) {
  const std::vector<int> Ns{64, 128, 256, 512};
  const auto r = scaling_suite(simple_steps(), 1, 1, Ns);
  EXPECT_NEAR(r.exponent, -1.5, 0.15);
  EXPECT_FALSE(r.flagged);
  EXPECT_LT(r.middle_spread, 0.25);
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    const double exact =
        static_cast<double>(oracle::reflection_count(Ns[i], 1, 1)) / std::pow(2.0, Ns[i]);
    EXPECT_NEAR(r.points[i].probability, exact, 1e-12 * exact);
  }
}

TEST(Scaling, FrozenWalkIsDegenerate) {
  const std::vector<int> Ns{8, 16, 32, 64};
  const auto r = scaling_suite(parametric_steps(std::numeric_limits<double>::infinity(), 0.5), 3, 3, Ns);
  EXPECT_TRUE(r.degenerate);
  // Geometric gaps hit each abscissa independently with probability 1 - q.
  for (const auto& p : r.points) EXPECT_NEAR(p.probability, 0.5, 1e-12);
  EXPECT_NEAR(r.exponent, 0.0, 1e-12);
  EXPECT_THROW(scaling_suite(simple_steps(), 1, 1, std::vector<int>{8, 16, 32}), Error);
}

TEST(EndpointRatio, RegressionAndEdgeCases) {
  // Frozen from the backward recursion oracle.
  const auto s = parametric_steps(std::log(2.0), 0.5);
  EXPECT_NEAR(endpoint_ratio_walk(16, 1, 1, s), 1.3640175964511201, 1e-12);
  const auto frozen = parametric_steps(std::numeric_limits<double>::infinity(), 0.5);
  EXPECT_EQ(endpoint_ratio_walk(16, 2, 2, frozen), 0.0);
  for (int v = 1; v <= 4; ++v) EXPECT_GE(endpoint_ratio_walk(16, 2, v, s), 0.0);
}

TEST(EndpointRatio, BoundedAcrossN) {
  const auto s = build_steps_from_animals(WeightModel{2.0, {}, {}}, 10);
  const auto r = endpoint_ratio_uniformity(s, std::vector<int>{16, 32, 64});
  EXPECT_LE(r.growth, 1.1);
}

TEST(WalkCsv, Format) {
  std::ostringstream out;
  write_walk_csv_header(out);
  BallotResult r;
  r.probability = 0.25;
  r.height_cap = 16;
  write_walk_csv_row(out, 16, 1, 2, r);
  EXPECT_EQ(out.str(),
            "N,u,v,method,probability,stderr,height_cap,cap_sensitivity\n16,1,2,dp,0.25,0,16,0\n");
}
