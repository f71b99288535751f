#pragma once

// Seeded random streams.
//
// Every stochastic kernel draws from std::mt19937_64. A stream is identified
// by (seed, index); the engine state is initialised through std::seed_seq
// from the four 32-bit halves of the pair, so distinct indices give
// statistically independent streams and the mapping is fully specified by
// the standard (bit-identical across platforms).

#include <cstdint>
#include <random>

namespace schn {

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5343484eu};
  return Rng(seq);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Cheap stream for many short-lived draws (one per simulated walk): the
/// engine is seeded with a single 64-bit value hashed from (seed, index).
inline Rng make_light_stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x5343484eULL)));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace schn
