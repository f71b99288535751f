#pragma once

// Single-spin-flip Markov chain Monte Carlo on a frozen-boundary box.
//
// Two kernels share the same stationary law: heat bath (default) resamples a
// site from its conditional distribution, Metropolis proposes a flip and
// accepts with min(1, exp(-beta dH)). Sites are visited in row-major free-site
// order. Chains start from the ground state of the boundary condition.
//
// Replicas run on independent streams make_stream(seed, replica) and are
// merged in replica order, so results do not depend on the thread count.

#include <array>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "schn/lattice.hpp"
#include "schn/rng.hpp"
#include "schn/stats.hpp"

namespace schn {

enum class Dynamics { heat_bath, metropolis };

struct Schedule {
  std::int64_t burn_in = 1000;
  std::int64_t sweeps = 10000;
  std::int64_t thin = 1;

  [[nodiscard]] std::int64_t samples() const { return sweeps / thin; }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct ChainState {
  SpinConfiguration config;
  Rng rng;
  std::int64_t sweeps_done = 0;

  ChainState(LatticePtr lattice, std::uint64_t seed, std::uint64_t replica = 0)
      : config(std::move(lattice)), rng(make_stream(seed, replica)) {}
};

namespace detail {

// Conditional P(+) indexed by (local field + 4) / 2.
inline std::array<double, 5> heat_bath_table(double beta) {
  std::array<double, 5> t{};
  for (int k = 0; k < 5; ++k) {
    const int field = 2 * k - 4;
    t[k] = 1.0 / (1.0 + std::exp(-2.0 * beta * field));
  }
  return t;
}

// Acceptance for dH = 2 * s * field, indexed by (s * field + 4) / 2.
inline std::array<double, 5> metropolis_table(double beta) {
  std::array<double, 5> t{};
  for (int k = 0; k < 5; ++k) {
    const int sf = 2 * k - 4;
    t[k] = sf <= 0 ? 1.0 : std::exp(-2.0 * beta * sf);
  }
  return t;
}

}  // namespace detail

inline void heatbath_sweep(ChainState& state, const ModelParams& params) {
  const auto table = detail::heat_bath_table(params.beta);
  // Compare raw 64-bit draws against p * 2^64; same law as uniform01() < p.
  std::array<std::uint64_t, 5> threshold{};
  for (int k = 0; k < 5; ++k) {
    threshold[k] = table[k] >= 1.0 ? ~std::uint64_t{0}
                                   : static_cast<std::uint64_t>(std::ldexp(table[k], 64));
  }
  const Lattice& lat = state.config.lattice();
  const int w = lat.width();
  Spin* s = state.config.raw();
  for (int i : lat.free_sites()) {
    const int field = s[i - 1] + s[i + 1] + s[i - w] + s[i + w];
    s[i] = state.rng() < threshold[(field + 4) >> 1] ? Spin{1} : Spin{-1};
  }
  ++state.sweeps_done;
  assert(state.config.respects_frozen());
}

inline void metropolis_sweep(ChainState& state, const ModelParams& params) {
  const auto table = detail::metropolis_table(params.beta);
  const Lattice& lat = state.config.lattice();
  const int w = lat.width();
  Spin* s = state.config.raw();
  for (int i : lat.free_sites()) {
    const int sf = s[i] * (s[i - 1] + s[i + 1] + s[i - w] + s[i + w]);
    // Draw unconditionally so the stream position does not depend on dH.
    const double u = uniform01(state.rng);
    if (sf <= 0 || u < table[(sf + 4) >> 1]) s[i] = static_cast<Spin>(-s[i]);
  }
  ++state.sweeps_done;
  assert(state.config.respects_frozen());
}

inline void sweep(ChainState& state, const ModelParams& params, Dynamics dynamics) {
  if (dynamics == Dynamics::heat_bath) {
    heatbath_sweep(state, params);
  } else {
    metropolis_sweep(state, params);
  }
}

/// A bundle of scalar observables measured together on each sample.
struct Observables {
  std::vector<std::string> names;
  /// Sites the observables read; each must be a free site of the box.
  std::vector<Site> sites;
  std::function<void(const SpinConfiguration&, std::span<double>)> measure;
};

/// Indicators 1{sigma_s = +1}.
inline Observables site_plus_indicators(std::vector<Site> sites) {
  Observables obs;
  for (const Site& s : sites) obs.names.push_back("plus" + to_string(s));
  obs.sites = sites;
  obs.measure = [sites](const SpinConfiguration& c, std::span<double> out) {
    for (std::size_t k = 0; k < sites.size(); ++k) out[k] = c.at(sites[k]) > 0 ? 1.0 : 0.0;
  };
  return obs;
}

/// Mean spin over the free sites.
inline Observables magnetization() {
  Observables obs;
  obs.names = {"magnetization"};
  obs.measure = [](const SpinConfiguration& c, std::span<double> out) {
    const auto& fs = c.lattice().free_sites();
    long sum = 0;
    for (int i : fs) sum += c[i];
    out[0] = fs.empty() ? 0.0 : static_cast<double>(sum) / static_cast<double>(fs.size());
  };
  return obs;
}

inline Observables combine(std::vector<Observables> parts) {
  Observables obs;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    obs.names.insert(obs.names.end(), p.names.begin(), p.names.end());
    obs.sites.insert(obs.sites.end(), p.sites.begin(), p.sites.end());
    widths.push_back(p.names.size());
  }
  obs.measure = [parts = std::move(parts), widths](const SpinConfiguration& c,
                                                   std::span<double> out) {
    std::size_t at = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      parts[k].measure(c, out.subspan(at, widths[k]));
      at += widths[k];
    }
  };
  return obs;
}

/// Packed spin rasters. A 32-byte header {"SCHN", u32 version, u32 M,
/// u32 N_free, 16 zero bytes} is followed by one record per sample:
/// u64 sweep index, then ceil(N_free / 8) bytes holding the free-site spins
/// in row-major order, LSB first, + = 1. All integers little-endian.
class SampleStreamWriter {
 public:
  static constexpr std::uint32_t kVersion = 1;

  SampleStreamWriter(const std::string& path, const Lattice& lat)
      : out_(path, std::ios::binary), n_free_(static_cast<std::uint32_t>(lat.free_count())) {
    detail::require(out_.good(), "SampleStreamWriter: cannot open " + path);
    std::array<unsigned char, 32> header{};
    header[0] = 'S';
    header[1] = 'C';
    header[2] = 'H';
    header[3] = 'N';
    put_u32(header.data() + 4, kVersion);
    put_u32(header.data() + 8, static_cast<std::uint32_t>(lat.shape().x_max));
    put_u32(header.data() + 12, n_free_);
    out_.write(reinterpret_cast<const char*>(header.data()), header.size());
  }

  void write(std::int64_t sweep_index, const SpinConfiguration& config) {
    std::vector<unsigned char> rec(8 + (n_free_ + 7) / 8, 0);
    const auto idx = static_cast<std::uint64_t>(sweep_index);
    for (int b = 0; b < 8; ++b) rec[b] = static_cast<unsigned char>(idx >> (8 * b));
    const auto& fs = config.lattice().free_sites();
    for (std::size_t k = 0; k < fs.size(); ++k) {
      if (config[fs[k]] > 0) rec[8 + k / 8] |= static_cast<unsigned char>(1u << (k % 8));
    }
    out_.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }

  void flush() { out_.flush(); }

 private:
  static void put_u32(unsigned char* p, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) p[b] = static_cast<unsigned char>(v >> (8 * b));
  }

  std::ofstream out_;
  std::uint32_t n_free_;
};

struct SampleRecord {
  std::uint64_t sweep = 0;
  std::vector<Spin> free_spins;
};

struct SampleStream {
  std::uint32_t version = 0;
  std::uint32_t M = 0;
  std::uint32_t n_free = 0;
  std::vector<SampleRecord> records;
};

inline SampleStream read_sample_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(in.good(), "read_sample_stream: cannot open " + path);
  std::array<unsigned char, 32> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  detail::require(in.gcount() == 32 && header[0] == 'S' && header[1] == 'C' && header[2] == 'H' &&
                      header[3] == 'N',
                  "read_sample_stream: bad magic in " + path);
  auto u32 = [&](int at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(header[at + b]) << (8 * b);
    return v;
  };
  SampleStream s;
  s.version = u32(4);
  s.M = u32(8);
  s.n_free = u32(12);
  const std::size_t rec_size = 8 + (s.n_free + 7) / 8;
  std::vector<unsigned char> rec(rec_size);
  while (in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec_size))) {
    SampleRecord r;
    for (int b = 0; b < 8; ++b) r.sweep |= static_cast<std::uint64_t>(rec[b]) << (8 * b);
    r.free_spins.resize(s.n_free);
    for (std::uint32_t k = 0; k < s.n_free; ++k) {
      r.free_spins[k] = (rec[8 + k / 8] >> (k % 8)) & 1u ? Spin{1} : Spin{-1};
    }
    s.records.push_back(std::move(r));
  }
  return s;
}

struct ChainOptions {
  Dynamics dynamics = Dynamics::heat_bath;
  int replicas = 1;
  int threads = 1;
  std::int64_t batches = 32;
  /// Receives every measured sample of replica 0.
  SampleStreamWriter* stream = nullptr;
  /// Check every sweep that frozen sites kept their values.
  bool verify_frozen = false;
};

struct ChainResult {
  std::vector<std::string> names;
  std::vector<EstimateWithError> estimates;
  std::vector<std::vector<EstimateWithError>> per_replica;
};

namespace detail {

inline std::vector<EstimateWithError> run_replica(const LatticePtr& lattice,
                                                  const ModelParams& params,
                                                  const Schedule& schedule, std::uint64_t seed,
                                                  std::uint64_t replica, const Observables& obs,
                                                  const ChainOptions& options,
                                                  SampleStreamWriter* stream) {
  ChainState state(lattice, seed, replica);
  const std::int64_t n = schedule.samples();
  std::vector<BatchMeans> acc;
  acc.reserve(obs.names.size());
  for (std::size_t k = 0; k < obs.names.size(); ++k) acc.emplace_back(n, options.batches);
  std::vector<double> values(obs.names.size(), 0.0);

  auto step = [&] {
    sweep(state, params, options.dynamics);
    if (options.verify_frozen && !state.config.respects_frozen()) {
      throw Error("run_chain: a frozen site changed value");
    }
  };
  for (std::int64_t t = 0; t < schedule.burn_in; ++t) step();
  for (std::int64_t t = 1; t <= schedule.sweeps; ++t) {
    step();
    if (t % schedule.thin != 0) continue;
    obs.measure(state.config, values);
    for (std::size_t k = 0; k < values.size(); ++k) acc[k].add(values[k]);
    if (stream != nullptr) stream->write(state.sweeps_done, state.config);
  }
  std::vector<EstimateWithError> out;
  out.reserve(acc.size());
  for (const auto& a : acc) out.push_back(a.estimate());
  return out;
}

}  // namespace detail

inline ChainResult run_chain(const LatticePtr& lattice, const ModelParams& params,
                             const Schedule& schedule, std::uint64_t seed, const Observables& obs,
                             const ChainOptions& options = {}) {
  detail::require(lattice != nullptr, "run_chain: null lattice");
  detail::require(params.beta >= 0.0, "run_chain: beta must be >= 0");
  detail::require(schedule.burn_in >= 1 && schedule.sweeps >= 1 && schedule.thin >= 1,
                  "run_chain: burn_in, sweeps and thin must be >= 1");
  detail::require(options.replicas >= 1, "run_chain: need at least one replica");
  detail::require(options.batches >= 16, "run_chain: need at least 16 batches");
  detail::require(schedule.samples() >= options.batches,
                  "run_chain: fewer samples than batches");
  for (const Site& s : obs.sites) {
    detail::require(lattice->is_free(s),
                    "run_chain: observable site " + to_string(s) + " is frozen or outside the box");
  }

  const int R = options.replicas;
  std::vector<std::vector<EstimateWithError>> per(static_cast<std::size_t>(R));
  const int threads = std::max(1, std::min(options.threads, R));
  if (threads == 1) {
    for (int r = 0; r < R; ++r) {
      per[r] = detail::run_replica(lattice, params, schedule, seed, static_cast<std::uint64_t>(r),
                                   obs, options, r == 0 ? options.stream : nullptr);
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int r = next++; r < R; r = next++) {
          try {
            per[r] = detail::run_replica(lattice, params, schedule, seed,
                                         static_cast<std::uint64_t>(r), obs, options,
                                         r == 0 ? options.stream : nullptr);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  ChainResult result;
  result.names = obs.names;
  result.per_replica = per;
  for (std::size_t k = 0; k < obs.names.size(); ++k) {
    std::vector<EstimateWithError> parts;
    parts.reserve(per.size());
    for (const auto& p : per) parts.push_back(p[k]);
    result.estimates.push_back(merge_estimates(parts));
  }
  return result;
}

}  // namespace schn
