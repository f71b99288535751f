// Command-line front end: exact probabilities, Monte Carlo estimates, contour
// dumps, ballot probabilities and config-driven experiments.
//
// Exit codes: 0 all asserted properties pass, 2 a property failed,
// 1 execution error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "schn/experiment.hpp"

namespace {

using namespace schn;

Segment parse_segment(const std::string& text) {
  const auto parts = detail::split_list(text);
  detail::require(parts.size() == 3 || parts.size() == 4,
                  "segment must be x_begin,x_end,y[,value]: '" + text + "'");
  Segment s;
  s.x_begin = detail::parse_number<int>(parts[0], "segment");
  s.x_end = detail::parse_number<int>(parts[1], "segment");
  s.y = detail::parse_number<int>(parts[2], "segment");
  s.value = parts.size() == 4 ? static_cast<Spin>(detail::parse_number<int>(parts[3], "segment")) : Spin{1};
  return s;
}

Site parse_site(const std::string& text) {
  const auto parts = detail::split_list(text);
  detail::require(parts.size() == 2, "site must be x,y: '" + text + "'");
  return {detail::parse_number<int>(parts[0], "site"), detail::parse_number<int>(parts[1], "site")};
}

struct Geometry {
  int M = 0;
  std::string strip;  // "rows,cols"
  std::vector<std::string> segments;
  int ring = -1;

  LatticePtr build() const {
    FrozenSpec spec{static_cast<Spin>(ring), {}};
    for (const auto& s : segments) spec.segments.push_back(parse_segment(s));
    if (!strip.empty()) {
      const auto rc = detail::split_list(strip);
      detail::require(rc.size() == 2, "--strip must be rows,cols");
      return build_strip(detail::parse_number<int>(rc[0], "strip"), detail::parse_number<int>(rc[1], "strip"), spec);
    }
    detail::require(M >= 1, "give --M or --strip");
    return build_lattice(M, spec);
  }
};

void add_geometry(CLI::App* cmd, Geometry& g) {
  cmd->add_option("--M", g.M, "Half-side of the square box V_M");
  cmd->add_option("--strip", g.strip, "Free rows,cols of a strip instead of a square box");
  cmd->add_option("--segment", g.segments, "Frozen segment x_begin,x_end,y[,value] (repeatable)");
  cmd->add_option("--ring", g.ring, "Ring value")->check(CLI::IsMember({-1, 1}));
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("SCHN_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

std::filesystem::path out_path(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  return std::filesystem::path(dir) / name;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ising interface experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads_flag = 0;
  app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides the config)");
  app.add_option("--threads", threads_flag, "Worker threads (default: SCHN_THREADS or 1)");

  Geometry geo;
  double beta = 1.0;
  std::vector<std::string> sites;

  auto* exact = app.add_subcommand("exact", "Exact P(sigma_s = +1) by enumeration or transfer matrix");
  add_geometry(exact, geo);
  exact->add_option("--beta", beta, "Inverse temperature");
  exact->add_option("--site", sites, "Site x,y (repeatable)")->required();
  std::string method = "auto";
  exact->add_option("--method", method, "brute, transfer or auto")
      ->check(CLI::IsMember({"brute", "transfer", "auto"}));

  auto* mc = app.add_subcommand("mc", "Monte Carlo estimate of P(sigma_s = +1)");
  add_geometry(mc, geo);
  mc->add_option("--beta", beta, "Inverse temperature");
  mc->add_option("--site", sites, "Site x,y (repeatable)")->required();
  Schedule schedule;
  int replicas = 4;
  std::string dynamics = "heat_bath";
  std::string stream;
  mc->add_option("--burn-in", schedule.burn_in, "Burn-in sweeps");
  mc->add_option("--sweeps", schedule.sweeps, "Measured sweeps per replica");
  mc->add_option("--thin", schedule.thin, "Sweeps between samples");
  mc->add_option("--replicas", replicas, "Independent replicas");
  mc->add_option("--dynamics", dynamics, "heat_bath or metropolis")
      ->check(CLI::IsMember({"heat_bath", "metropolis"}));
  mc->add_option("--stream", stream, "Write replica 0 samples to this file in --out-dir");

  auto* contours = app.add_subcommand("contours", "Sample configurations and write their contours");
  add_geometry(contours, geo);
  contours->add_option("--beta", beta, "Inverse temperature");
  std::int64_t samples = 100;
  contours->add_option("--samples", samples, "Number of configurations");
  contours->add_option("--burn-in", schedule.burn_in, "Burn-in sweeps");
  contours->add_option("--thin", schedule.thin, "Sweeps between samples");

  auto* walk = app.add_subcommand("walk", "Ballot probability P(u -> v) of an effective walk");
  std::string law = "simple";
  int wN = 64, wu = 1, wv = 1;
  std::string wmethod = "dp";
  std::int64_t walks = 100000;
  WalkSuiteConfig wcfg;
  walk->add_option("--law", law, "simple, animals, parametric or frozen")
      ->check(CLI::IsMember({"simple", "animals", "parametric", "frozen"}));
  walk->add_option("--N", wN, "Horizontal distance")->required();
  walk->add_option("--u", wu, "Start height");
  walk->add_option("--v", wv, "End height");
  walk->add_option("--method", wmethod, "dp or mc")->check(CLI::IsMember({"dp", "mc"}));
  walk->add_option("--walks", walks, "Walks for --method mc");
  walk->add_option("--animal-beta", wcfg.animal_beta, "Inverse temperature of the animal law");
  walk->add_option("--animal-cutoff", wcfg.animal_cutoff, "Size cutoff of the animal law");
  walk->add_option("--rate", wcfg.parametric_rate, "Vertical decay rate of the parametric law");
  walk->add_option("--q", wcfg.parametric_q, "Horizontal gap parameter of the parametric law");

  auto* experiment = app.add_subcommand("experiment", "Run the experiment described by a config file");
  std::string config_path;
  experiment->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const int threads = resolve_threads(threads_flag);
  const std::uint64_t run_seed = seed.value_or(1);
  const std::string dir = out_dir.empty() ? "out" : out_dir;

  try {
    if (*exact) {
      const auto lat = geo.build();
      std::cout << "site,beta,method,probability,log_partition\n";
      std::cout.precision(17);
      for (const auto& s : sites) {
        const PartialAssignment event{{parse_site(s), Spin{1}}};
        ExactResult r;
        if (method == "brute") {
          r = brute_probability(*lat, {beta}, event);
        } else if (method == "transfer") {
          r = transfer_probability(*lat, {beta}, event);
        } else {
          r = exact_probability(*lat, {beta}, event);
        }
        std::cout << '"' << s << "\"," << beta << ',' << to_string(r.method) << ',' << r.probability << ','
                  << r.log_partition << '\n';
      }
      return 0;
    }

    if (*mc) {
      const auto lat = geo.build();
      std::vector<Site> where;
      for (const auto& s : sites) where.push_back(parse_site(s));
      ChainOptions opt;
      opt.dynamics = parse_dynamics(dynamics);
      opt.replicas = replicas;
      opt.threads = threads;
      std::optional<SampleStreamWriter> writer;
      if (!stream.empty()) {
        writer.emplace(out_path(dir, stream).string(), *lat);
        opt.stream = &*writer;
      }
      const auto res = run_chain(lat, {beta}, schedule, run_seed, site_plus_indicators(where), opt);
      std::cout << "observable,mean,stderr,samples\n";
      std::cout.precision(17);
      for (std::size_t k = 0; k < res.names.size(); ++k) {
        std::cout << '"' << res.names[k] << "\"," << res.estimates[k].mean << ',' << res.estimates[k].std_error
                  << ',' << res.estimates[k].n_samples << '\n';
      }
      return 0;
    }

    if (*contours) {
      const auto lat = geo.build();
      ChainState state(lat, run_seed);
      for (std::int64_t t = 0; t < schedule.burn_in; ++t) sweep(state, {beta}, Dynamics::heat_bath);
      std::ofstream out(out_path(dir, "contours.csv"), std::ios::binary);
      write_contours_csv_header(out);
      for (std::int64_t k = 0; k < samples; ++k) {
        for (std::int64_t t = 0; t < schedule.thin; ++t) sweep(state, {beta}, Dynamics::heat_bath);
        write_contours_csv(out, k, extract_contours(state.config));
      }
      std::cout << (std::filesystem::path(dir) / "contours.csv").string() << '\n';
      return 0;
    }

    if (*walk) {
      const auto steps = detail::walk_law(law, wcfg);
      const auto r = wmethod == "dp" ? ballot_dp(wN, wu, wv, steps)
                                     : ballot_mc(wN, wu, wv, steps, walks, run_seed, threads);
      write_walk_csv_header(std::cout);
      write_walk_csv_row(std::cout, wN, wu, wv, r);
      return 0;
    }

    if (*experiment) {
      ExperimentConfig cfg = ExperimentConfig::from_config(Config::load(config_path));
      if (seed) cfg.seed = *seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const auto report = run_experiment(cfg, threads, &std::cerr);
      for (const auto& v : report.verdicts) {
        std::cout << (v.pass ? "PASS " : "FAIL ") << v.property << " measured=" << format_real(v.measured)
                  << " threshold=" << format_real(v.threshold) << '\n';
      }
      std::cout << (std::filesystem::path(cfg.out_dir) / "summary.json").string() << '\n';
      return report.all_pass() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
