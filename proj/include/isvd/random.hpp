// Seeded pseudo-random substreams.
//
// Every run is governed by one 64-bit seed. Independent concerns (initial
// matrix, event stream, per-row factor loadings, ...) draw from substreams
// keyed by (seed, stream, index) through std::seed_seq, so adding events
// never perturbs the initial matrix. Generator: std::mt19937_64.

#pragma once

#include <cstdint>
#include <random>

namespace isvd::random {

enum class Stream : std::uint32_t {
  row_factors = 1,
  col_factors = 2,
  init_noise = 3,
  events = 4,
  event_noise = 5,
  panel_loadings = 6,
  panel_returns = 7,
  portfolios = 8,
};

using Engine = std::mt19937_64;

inline Engine substream(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Engine(seq);
}

inline constexpr const char* kDescription =
    "mt19937_64 seeded via std::seed_seq{seed_lo, seed_hi, stream, index_lo, index_hi}; "
    "normal and uniform draws via std::normal_distribution / std::uniform_int_distribution";

}  // namespace isvd::random
