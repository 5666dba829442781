#pragma once

#include <cstdint>
#include <limits>

namespace cbloss {

/// SplitMix64 generator (Steele, Lea & Flood, 2014).
///
/// Used wherever a stream has to be derived from a (seed, index) pair, e.g.
/// one stream per Monte Carlo trial. Satisfies UniformRandomBitGenerator so it
/// can also drive the standard distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(state_ += 0x9E3779B97F4A7C15ULL); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Seed of sub-stream `index` under master `seed`. Distinct (seed, index)
/// pairs map to well separated seeds; the mapping is order independent.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64::mix(SplitMix64::mix(seed) ^ (index * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
}

}  // namespace cbloss
