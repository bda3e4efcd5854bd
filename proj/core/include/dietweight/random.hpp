// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace dietweight {

/// splitmix64 generator. Satisfies UniformRandomBitGenerator so it can drive
/// the <random> distributions, but the raw stream is what pins reproducibility.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal();

 private:
  std::uint64_t state_;
};

/// Seed for an independent substream: one splitmix64 step over seed ^ tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Same, with a string tag hashed by FNV-1a.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Fisher-Yates shuffle: for i = n-1 down to 1, j = next() mod (i+1), swap.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dietweight
