#pragma once

// Exact finite-volume Gibbs probabilities.
//
// brute_probability enumerates every free-site configuration in Gray-code
// order and builds an integer histogram of energies; probabilities are then
// ratios of exponential sums over that histogram, accumulated in increasing
// energy order. transfer_probability contracts the box column by column, one
// site at a time, with per-column rescaling so large beta does not underflow.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "schn/lattice.hpp"

namespace schn {

using PartialAssignment = std::vector<std::pair<Site, Spin>>;

enum class ExactMethod { brute, transfer };

inline const char* to_string(ExactMethod m) {
  return m == ExactMethod::brute ? "brute" : "transfer";
}

struct ExactResult {
  double probability = 0.0;
  double log_partition = 0.0;
  ExactMethod method = ExactMethod::brute;
};

inline constexpr int kDefaultBruteCap = 26;
inline constexpr int kDefaultTransferCap = 14;

namespace detail {

inline void validate_event(const Lattice& lat, const PartialAssignment& event) {
  for (std::size_t a = 0; a < event.size(); ++a) {
    const auto& [s, v] = event[a];
    require(lat.is_free(s), "event site " + to_string(s) + " is frozen or outside the box");
    require(v == 1 || v == -1, "event spin must be +1 or -1");
    for (std::size_t b = 0; b < a; ++b) {
      require(!(event[b].first == s), "event lists site " + to_string(s) + " twice");
    }
  }
}

}  // namespace detail

/// Energy histogram of all free-site configurations, split by whether the
/// event holds. Energies are offset by the number of bonds.
struct EnergyHistogram {
  long offset = 0;  // index = H + offset
  std::vector<std::uint64_t> all;
  std::vector<std::uint64_t> event;
};

inline EnergyHistogram energy_histogram(const Lattice& lat, const PartialAssignment& event,
                                        int free_cap = kDefaultBruteCap) {
  detail::validate_event(lat, event);
  const int F = lat.free_count();
  detail::require(F <= free_cap && F <= 40,
                  "brute_probability: " + std::to_string(F) + " free sites exceeds the cap of " +
                      std::to_string(free_cap) + " (use transfer_probability for strips)");

  const auto& fs = lat.free_sites();
  // For each free site: external field from frozen neighbours, and the list
  // of free neighbours (as free indices).
  std::vector<int> field(static_cast<std::size_t>(F), 0);
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(F));
  for (int k = 0; k < F; ++k) {
    for (int j : lat.neighbors(fs[k])) {
      if (lat.is_free(j)) {
        nbrs[k].push_back(lat.free_index(j));
      } else {
        field[k] += lat.frozen_value(j);
      }
    }
  }

  std::uint64_t event_mask = 0;
  std::uint64_t event_bits = 0;
  for (const auto& [s, v] : event) {
    const int k = lat.free_index(lat.index(s));
    event_mask |= std::uint64_t{1} << k;
    if (v > 0) event_bits |= std::uint64_t{1} << k;
  }

  const long bonds = 2L * lat.width() * lat.height() - lat.width() - lat.height();
  EnergyHistogram hist;
  hist.offset = bonds;
  hist.all.assign(static_cast<std::size_t>(2 * bonds + 1), 0);
  hist.event.assign(hist.all.size(), 0);

  // Start from all free spins at -1.
  std::vector<int> spin(static_cast<std::size_t>(F), -1);
  long energy = frozen_bond_energy(lat);
  for (int k = 0; k < F; ++k) {
    energy += field[k];  // -(-1) * field
    for (int j : nbrs[k]) {
      if (j > k) energy -= 1;
    }
  }

  std::uint64_t bits = 0;
  const std::uint64_t total = std::uint64_t{1} << F;
  for (std::uint64_t step = 0;; ++step) {
    ++hist.all[energy + bonds];
    if ((bits & event_mask) == event_bits) ++hist.event[energy + bonds];
    if (step + 1 == total) break;
    const int k = std::countr_zero(step + 1);
    int h = field[k];
    for (int j : nbrs[k]) h += spin[j];
    energy += 2L * spin[k] * h;
    spin[k] = -spin[k];
    bits ^= std::uint64_t{1} << k;
  }
  return hist;
}

/// Evaluates an energy histogram at one inverse temperature.
inline ExactResult evaluate_histogram(const EnergyHistogram& hist, double beta) {
  detail::require(beta >= 0.0, "brute_probability: beta must be >= 0");
  std::size_t first = 0;
  while (hist.all[first] == 0) ++first;
  const long e_min = static_cast<long>(first) - hist.offset;
  long double z = 0.0L;
  long double z_event = 0.0L;
  for (std::size_t i = first; i < hist.all.size(); ++i) {
    if (hist.all[i] == 0) continue;
    const long double w =
        std::exp(-static_cast<long double>(beta) * static_cast<long double>(i - first));
    z += w * static_cast<long double>(hist.all[i]);
    z_event += w * static_cast<long double>(hist.event[i]);
  }
  ExactResult out;
  out.method = ExactMethod::brute;
  out.probability = static_cast<double>(z_event / z);
  out.log_partition = static_cast<double>(std::log(z) - static_cast<long double>(beta) * e_min);
  return out;
}

/// P(event) by full enumeration of the 2^F free-site configurations.
inline ExactResult brute_probability(const Lattice& lat, const ModelParams& params,
                                     const PartialAssignment& event,
                                     int free_cap = kDefaultBruteCap) {
  detail::require(params.beta >= 0.0, "brute_probability: beta must be >= 0");
  return evaluate_histogram(energy_histogram(lat, event, free_cap), params.beta);
}

/// P(event) by site-by-site column transfer. The event must sit on a single
/// column; the interior height must not exceed `row_cap`.
inline ExactResult transfer_probability(const Lattice& lat, const ModelParams& params,
                                        const PartialAssignment& event,
                                        int row_cap = kDefaultTransferCap) {
  detail::require(params.beta >= 0.0, "transfer_probability: beta must be >= 0");
  detail::validate_event(lat, event);
  const BoxShape& box = lat.shape();
  const int R = box.interior_rows();
  detail::require(R <= row_cap && R <= 24,
                  "transfer_probability: strip width " + std::to_string(R) +
                      " exceeds the cap of " + std::to_string(row_cap));
  std::optional<int> event_col;
  std::uint32_t event_mask = 0;
  std::uint32_t event_bits = 0;
  for (const auto& [s, v] : event) {
    detail::require(!event_col || *event_col == s.x,
                    "transfer_probability: event must be supported on one column");
    event_col = s.x;
    const int r = s.y - (box.y_min + 1);
    event_mask |= 1u << r;
    if (v > 0) event_bits |= 1u << r;
  }

  using Real = long double;
  const Real beta = params.beta;
  const Spin ring = lat.spec().ring_value;
  const std::size_t n_states = std::size_t{1} << R;
  // weight[s][sum + 4] = exp(beta * s * sum) for the bonds a new site closes.
  Real weight[2][9];
  for (int sum = -4; sum <= 4; ++sum) {
    weight[0][sum + 4] = std::exp(-beta * sum);
    weight[1][sum + 4] = std::exp(beta * sum);
  }

  std::vector<Real> full(n_states, 0.0L);
  std::vector<Real> restricted(n_states, 0.0L);
  const std::size_t ring_state = ring > 0 ? n_states - 1 : 0;
  full[ring_state] = 1.0L;
  restricted[ring_state] = 1.0L;
  Real log_scale = 0.0L;

  auto bit_spin = [](std::size_t state, int r) { return (state >> r) & 1u ? 1 : -1; };

  for (int x = box.x_min + 1; x <= box.x_max - 1; ++x) {
    for (int r = 0; r < R; ++r) {
      const int y = box.y_min + 1 + r;
      const Spin frozen = lat.frozen_value(lat.index({x, y}));
      const std::size_t bit = std::size_t{1} << r;
      for (std::size_t base = 0; base < n_states; ++base) {
        if (base & bit) continue;
        const std::size_t hi = base | bit;
        // Neighbours already placed: below (row r-1 of this column or the
        // bottom ring) and, for the top row, the top ring. The left neighbour
        // is the old value of bit r.
        int fixed = r == 0 ? ring : bit_spin(base, r - 1);
        if (r == R - 1) fixed += ring;
        const Real f_lo = full[base];       // left neighbour -1
        const Real f_hi = full[hi];         // left neighbour +1
        const Real g_lo = restricted[base];
        const Real g_hi = restricted[hi];
        Real new_lo = 0.0L, new_hi = 0.0L, rnew_lo = 0.0L, rnew_hi = 0.0L;
        if (frozen != 1) {  // new spin -1 stored in `base`
          new_lo = f_lo * weight[0][fixed - 1 + 4] + f_hi * weight[0][fixed + 1 + 4];
          rnew_lo = g_lo * weight[0][fixed - 1 + 4] + g_hi * weight[0][fixed + 1 + 4];
        }
        if (frozen != -1) {  // new spin +1 stored in `hi`
          new_hi = f_lo * weight[1][fixed - 1 + 4] + f_hi * weight[1][fixed + 1 + 4];
          rnew_hi = g_lo * weight[1][fixed - 1 + 4] + g_hi * weight[1][fixed + 1 + 4];
        }
        full[base] = new_lo;
        full[hi] = new_hi;
        restricted[base] = rnew_lo;
        restricted[hi] = rnew_hi;
      }
    }
    if (event_col && *event_col == x) {
      for (std::size_t s = 0; s < n_states; ++s) {
        if ((s & event_mask) != event_bits) restricted[s] = 0.0L;
      }
    }
    Real peak = 0.0L;
    for (Real v : full) peak = std::max(peak, v);
    for (std::size_t s = 0; s < n_states; ++s) {
      full[s] /= peak;
      restricted[s] /= peak;
    }
    log_scale += std::log(peak);
  }

  // Bonds to the right ring column.
  Real z = 0.0L;
  Real z_event = 0.0L;
  for (std::size_t s = 0; s < n_states; ++s) {
    int sum = 0;
    for (int r = 0; r < R; ++r) sum += bit_spin(s, r);
    const Real w = std::exp(beta * ring * sum);
    z += full[s] * w;
    z_event += restricted[s] * w;
  }

  // Ring-ring bonds are a constant.
  long ring_energy = 0;
  {
    const int w = lat.width();
    const int h = lat.height();
    for (int i = 0; i < lat.size(); ++i) {
      const Site s = lat.site(i);
      if (!box.on_ring(s)) continue;
      const int c = i % w;
      const int rr = i / w;
      if (c + 1 < w && box.on_ring(lat.site(i + 1))) ring_energy -= ring * ring;
      if (rr + 1 < h && box.on_ring(lat.site(i + w))) ring_energy -= ring * ring;
    }
  }

  ExactResult out;
  out.method = ExactMethod::transfer;
  out.probability = static_cast<double>(z_event / z);
  out.log_partition = static_cast<double>(std::log(z) + log_scale - beta * ring_energy);
  return out;
}

/// Either oracle, whichever applies (brute force preferred).
inline ExactResult exact_probability(const Lattice& lat, const ModelParams& params,
                                     const PartialAssignment& event) {
  if (lat.free_count() <= kDefaultBruteCap) return brute_probability(lat, params, event);
  return transfer_probability(lat, params, event);
}

namespace detail {

// Order -1 < free < +1 used for boundary-condition comparison.
inline int fkg_rank(Spin frozen) { return frozen; }

}  // namespace detail

/// True when `high` dominates `low` sitewise on the given box.
inline bool fkg_comparable(const BoxShape& shape, const FrozenSpec& low, const FrozenSpec& high) {
  const Lattice a(shape, low);
  const Lattice b(shape, high);
  for (int i = 0; i < a.size(); ++i) {
    if (detail::fkg_rank(a.frozen_value(i)) > detail::fkg_rank(b.frozen_value(i))) return false;
  }
  return true;
}

struct FkgAudit {
  double p_low = 0.0;
  double p_high = 0.0;
  bool holds = true;  // p_low <= p_high + 1e-12
};

/// P(sigma_site = +1) under both boundary conditions.
inline FkgAudit fkg_audit(const BoxShape& shape, const ModelParams& params,
                          const FrozenSpec& spec_low, const FrozenSpec& spec_high, Site site) {
  detail::require(fkg_comparable(shape, spec_low, spec_high),
                  "fkg_audit: boundary conditions are not ordered sitewise");
  const Lattice low(shape, spec_low);
  const Lattice high(shape, spec_high);
  const PartialAssignment event{{site, Spin{1}}};
  FkgAudit out;
  out.p_low = exact_probability(low, params, event).probability;
  out.p_high = exact_probability(high, params, event).probability;
  out.holds = out.p_low <= out.p_high + 1e-12;
  return out;
}

}  // namespace schn
