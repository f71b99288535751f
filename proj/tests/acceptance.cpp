// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance --config-dir configs --out-dir build/acceptance [--only 1,4]
//              [--known-failure 7,8]
//
// Criteria listed in --known-failure still print their real verdict; they
// only stop affecting the exit status. The reason for each is recorded
// next to the build in the project notes.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "schn/ensemble.hpp"
#include "schn/experiment.hpp"

using namespace schn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) { return format_real(x); }

std::string config_dir;
std::string out_root;

// Every single horizontal segment strictly inside the box, both signs, plus
// the bare box.
std::vector<FrozenSpec> one_segment_specs(const BoxShape& box) {
  std::vector<FrozenSpec> out{FrozenSpec{-1, {}}};
  for (int y = box.y_min + 1; y <= box.y_max - 1; ++y) {
    for (int a = box.x_min + 1; a <= box.x_max - 1; ++a) {
      for (int b = a; b <= box.x_max - 1; ++b) {
        for (Spin v : {Spin{1}, Spin{-1}}) out.push_back(FrozenSpec{-1, {{a, b, y, v}}});
      }
    }
  }
  return out;
}

const std::vector<double> kGridBetas{0.0, 0.5, 1.0, 2.0};

// M = 2: every free site. 3 x 8 strips: every free site of the centre column.
std::vector<Site> probe_sites(const Lattice& lat, bool strip) {
  std::vector<Site> out;
  for (int i : lat.free_sites()) {
    const Site s = lat.site(i);
    if (!strip || s.x == 0) out.push_back(s);
  }
  return out;
}

Outcome criterion_1() {
  double worst = 0.0;
  long cases = 0;
  for (const bool strip : {false, true}) {
    const BoxShape box = strip ? BoxShape::strip(3, 8) : BoxShape::square(2);
    for (const auto& spec : one_segment_specs(box)) {
      const Lattice lat(box, spec);
      for (const Site s : probe_sites(lat, strip)) {
        const PartialAssignment event{{s, Spin{1}}};
        // The enumeration histogram does not depend on beta.
        const auto hist = energy_histogram(lat, event);
        for (const double beta : kGridBetas) {
          const double b = evaluate_histogram(hist, beta).probability;
          const double t = transfer_probability(lat, {beta}, event).probability;
          worst = std::max(worst, std::abs(b - t));
          ++cases;
        }
      }
    }
  }
  return {worst <= 1e-12, "max |brute - transfer| = " + fmt(worst) + " over " + std::to_string(cases) +
                              " (box, spec, site, beta) cases (tolerance 1e-12)"};
}

Outcome criterion_2() {
  // 40 seeded runs per kernel, cycling through box shapes, betas and specs.
  const BoxShape shapes[2] = {BoxShape::square(2), BoxShape::strip(3, 8)};
  const std::vector<FrozenSpec> specs[2] = {one_segment_specs(shapes[0]), one_segment_specs(shapes[1])};
  int agree[2] = {0, 0};
  const int runs = 40;
  for (int k = 0; k < runs; ++k) {
    const int g = k % 2;
    const double beta = kGridBetas[static_cast<std::size_t>((k / 2) % 4)];
    const auto& spec = specs[g][splitmix64(static_cast<std::uint64_t>(k)) % specs[g].size()];
    const auto lat = build_lattice(shapes[g], spec);
    const auto sites = probe_sites(*lat, g == 1);
    const Site s = sites[splitmix64(static_cast<std::uint64_t>(k) + 1000) % sites.size()];
    const double exact = exact_probability(*lat, {beta}, {{s, Spin{1}}}).probability;
    for (int d = 0; d < 2; ++d) {
      ChainOptions opt;
      opt.dynamics = d == 0 ? Dynamics::heat_bath : Dynamics::metropolis;
      opt.replicas = 2;
      const auto res = run_chain(lat, {beta}, {1000, 40000, 1}, 7000 + static_cast<std::uint64_t>(k),
                                 site_plus_indicators({s}), opt);
      if (res.estimates[0].agrees_with(exact, 3.0)) ++agree[d];
    }
  }
  const int need = 38;  // 95% of 40
  return {agree[0] >= need && agree[1] >= need,
          "within 3 stderr of the exact value: heat bath " + std::to_string(agree[0]) + "/40, Metropolis " +
              std::to_string(agree[1]) + "/40 (need >= 38)"};
}

Outcome criterion_3() {
  long checks = 0, violations = 0;
  // Probes are the criterion 1 grid: every free site of the box, the centre
  // column of a strip.
  auto audit = [&](const BoxShape& box, const FrozenSpec& low, const FrozenSpec& high) {
    if (!fkg_comparable(box, low, high)) throw Error("criterion 3: incomparable boundary conditions");
    const Lattice lo(box, low), hi(box, high);
    for (const Site s : probe_sites(hi, box.interior_rows() == 3 && box.interior_cols() == 8)) {
      const PartialAssignment event{{s, Spin{1}}};
      for (const double beta : kGridBetas) {
        const double p_lo = exact_probability(lo, {beta}, event).probability;
        const double p_hi = exact_probability(hi, {beta}, event).probability;
        ++checks;
        if (p_lo > p_hi + 1e-12) ++violations;
      }
    }
  };
  for (const BoxShape box : {BoxShape::square(2), BoxShape::strip(3, 8)}) {
    // Two-sided against one-sided: I' = [-N, -n], I'' = [n, N] on y = 0.
    for (int n = 1; n <= box.x_max - 1; ++n) {
      for (int N = n; N <= std::min(-box.x_min - 1, box.x_max - 1); ++N) {
        audit(box, FrozenSpec{-1, {{-N, -n, 0, 1}}}, FrozenSpec{-1, {{-N, -n, 0, 1}, {n, N, 0, 1}}});
      }
    }
    // Longer + segment against each one-site-shorter one (transitivity covers the rest).
    for (int y = box.y_min + 1; y <= box.y_max - 1; ++y) {
      for (int a = box.x_min + 1; a <= box.x_max - 1; ++a) {
        for (int b = a; b <= box.x_max - 1; ++b) {
          const FrozenSpec shorter{-1, {{a, b, y, 1}}};
          if (a > box.x_min + 1) audit(box, shorter, FrozenSpec{-1, {{a - 1, b, y, 1}}});
          if (b < box.x_max - 1) audit(box, shorter, FrozenSpec{-1, {{a, b + 1, y, 1}}});
        }
      }
    }
  }
  return {violations == 0 && checks > 0,
          std::to_string(violations) + " violations in " + std::to_string(checks) + " exact comparisons"};
}

ExperimentReport run_config(const std::string& name) {
  auto cfg = ExperimentConfig::from_config(Config::load((std::filesystem::path(config_dir) / (name + ".cfg")).string()));
  cfg.out_dir = (std::filesystem::path(out_root) / name).string();
  return run_experiment(cfg, 1, &std::cerr);
}

// All named verdicts must exist and pass.
Outcome judge(const ExperimentReport& rep, const std::vector<std::string>& properties) {
  Outcome out{true, ""};
  for (const auto& p : properties) {
    const Verdict* v = rep.find(p);
    if (!out.detail.empty()) out.detail += "; ";
    if (v == nullptr) {
      out.pass = false;
      out.detail += p + " missing";
      continue;
    }
    out.pass = out.pass && v->pass;
    out.detail += p + (v->pass ? " ok " : " FAILS ") + fmt(v->measured) + " vs " + fmt(v->threshold);
  }
  return out;
}

Outcome criterion_4() {
  const auto rep = run_config("one_sided_decay");
  return judge(rep, {"decay_rate_negative[beta=1,M=32,N=8]", "decay_r2[beta=1,M=32,N=8]",
                     "decay_rate_negative[beta=1,M=32,N=16]", "decay_r2[beta=1,M=32,N=16]",
                     "rate_uniformity_in_N[beta=1]", "probe_uniformity_in_M[beta=1,M=32,M2=48]"});
}

Outcome criterion_5() {
  const auto rep = run_config("cut_height");
  return judge(rep, {"ratio_below_one[beta=1,N=16]", "ratio_decreasing_in_beta[N=16,beta1=1,beta2=1.5]"});
}

Outcome criterion_6() {
  std::ostringstream d;
  bool ok = true;
  double max_tail = 0.0;
  // Vertical ratio against exp(-0.8 beta), and c increasing in beta.
  double prev_c = 0.0;
  double worst_margin = -1.0;
  for (const double beta : {1.5, 2.0, 3.0}) {
    double min_c = std::numeric_limits<double>::infinity();
    for (const int v1 : {2, 3, 4, 6}) {
      const auto r = vertical_ratio(v1, 0, WeightModel{beta, {}, {}}, 8);
      max_tail = std::max({max_tail, r.upper.tail_fraction(), r.lower.tail_fraction()});
      worst_margin = std::max(worst_margin, r.ratio / std::exp(-0.8 * beta) - 1.0);
      ok = ok && r.ratio <= std::exp(-0.8 * beta);
      min_c = std::min(min_c, r.c);
    }
    ok = ok && min_c > prev_c;
    d << "min c(" << fmt(beta) << ") = " << fmt(min_c) << "; ";
    prev_c = min_c;
  }
  d << "worst ratio / bound - 1 = " << fmt(worst_margin) << "; ";
  // Z(u -> v + 1) < Z(u -> v) for 1 <= u <= v <= 4 on N <= 8.
  int bad = 0, total = 0;
  double worst = 0.0;
  for (const double beta : {1.5, 2.0, 3.0}) {
    for (const int N : {2, 4, 6, 8}) {
      for (int u = 1; u <= 4; ++u) {
        for (int v = u; v <= 4; ++v) {
          const auto r = endpoint_ratio(N, u, v, WeightModel{beta, {}, {}}, 10);
          max_tail = std::max({max_tail, r.raised.tail_fraction(), r.base.tail_fraction()});
          worst = std::max(worst, r.ratio);
          ++total;
          if (!(r.ratio < 1.0)) ++bad;
        }
      }
    }
  }
  ok = ok && bad == 0 && max_tail < 0.01;
  d << "endpoint ratio >= 1 in " << bad << "/" << total << " cases (max " << fmt(worst)
    << "); max truncation tail " << fmt(max_tail);
  return {ok, d.str()};
}

std::optional<ExperimentReport> walk_report;

const ExperimentReport& walk_suite() {
  if (!walk_report) walk_report = run_config("walk_suite");
  return *walk_report;
}

Outcome criterion_7() {
  return judge(walk_suite(), {"exponent_deviation[simple]", "reflection_relative_error[simple]",
                              "exponent_deviation[animals]", "middle_spread[simple]", "middle_spread[animals]"});
}

Outcome criterion_8() {
  return judge(walk_suite(), {"endpoint_ratio_slope[animals]", "endpoint_ratio_slope[parametric]"});
}

// Every shipped experiment, shortened, run twice with the same config and
// seed (and different thread counts); all artifacts must match byte for byte.
Outcome criterion_9() {
  std::ostringstream d;
  bool ok = true;
  for (const char* name : {"one_sided_decay", "two_sided_wetting", "cut_height", "walk_suite"}) {
    auto cfg = ExperimentConfig::from_config(
        Config::load((std::filesystem::path(config_dir) / (std::string(name) + ".cfg")).string()));
    cfg.out_dir = (std::filesystem::path(out_root) / "determinism" / name).string();
    cfg.schedule.burn_in = 200;
    cfg.schedule.sweeps = 2000;
    cfg.probe_sweeps = cfg.probe_sweeps > 0 ? 1000 : 0;
    cfg.walk.scaling_N = {16, 32, 64, 128};
    cfg.walk.uniformity_N = {16, 32};
    cfg.walk.mc_walks = 2000;
    auto read_all = [&](const ExperimentReport& rep) {
      std::vector<std::string> bytes;
      for (const auto& f : rep.artifacts) {
        std::ifstream in(std::filesystem::path(cfg.out_dir) / f, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes.push_back(ss.str());
      }
      return bytes;
    };
    const auto first = run_experiment(cfg, 1);
    const auto a = read_all(first);
    const auto second = run_experiment(cfg, 2);
    const auto b = read_all(second);
    const bool same = first.artifacts == second.artifacts && a == b;
    ok = ok && same;
    if (!d.str().empty()) d << "; ";
    d << name << (same ? " identical" : " DIFFERS") << " (" << a.size() << " files)";
  }
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::vector<int> known_failures;
  config_dir = "configs";
  out_root = "acceptance_out";
  app.add_option("--config-dir", config_dir, "Directory with the experiment configs");
  app.add_option("--out-dir", out_root, "Where experiment artifacts go");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--known-failure", known_failures, "Criteria whose FAIL does not change the exit status")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "oracle cross-validation", 30, criterion_1},
      {2, "sampler correctness", 180, criterion_2},
      {3, "FKG monotonicity (exact)", 600, criterion_3},
      {4, "one-sided exponential decay", 600, criterion_4},
      {5, "cut-height localization", 600, criterion_5},
      {6, "contour-ensemble ratios", 300, criterion_6},
      {7, "walk scaling", 120, criterion_7},
      {8, "endpoint-ratio uniformity", 120, criterion_8},
      {9, "determinism", 600, criterion_9},
  };
  const std::set<int> selected(only.begin(), only.end());
  const std::set<int> tolerated(known_failures.begin(), known_failures.end());
  bool blocking_failure = false;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the runtime budget of " + fmt(c.budget_s) + " s";
    }
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(1);
    line << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail << " ["
         << secs << " s]";
    if (!o.pass && tolerated.count(c.id)) line << " [known failure]";
    std::cout << line.str() << std::endl;
    if (!o.pass && !tolerated.count(c.id)) blocking_failure = true;
  }
  return blocking_failure ? 1 : 0;
}
