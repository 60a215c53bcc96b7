// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace avjoint {

using Rng = std::mt19937_64;

// Every random stream is derived from one root seed. A stream is identified
// by (purpose, a, b); the mixing is splitmix64 applied in a fixed chain, so a
// given triple always yields the same seed and distinct triples do not share
// state.
enum class SeedPurpose : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  Augment = 3,
  Dropout = 4,
  Synth = 5,
  Split = 6,
  VePretrain = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, SeedPurpose purpose,
                                    std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
  std::uint64_t h = splitmix64(root ^ splitmix64(static_cast<std::uint64_t>(purpose)));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b * 0xD1B54A32D192ED03ull));
  return h;
}

inline Rng make_rng(std::uint64_t root, SeedPurpose purpose, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(root, purpose, a, b));
}

/// Stable 64-bit hash of a short tag, used to give named parameter groups
/// their own init streams.
constexpr std::uint64_t tag_hash(const char* s) noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 1099511628211ull;
  return h;
}

}  // namespace avjoint
