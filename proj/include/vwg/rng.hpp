#pragma once

#include <cmath>
#include <cstdint>

namespace vwg {

// Deterministic RNG used everywhere randomness is needed. The algorithms are
// part of the data-format contract: a dataset generated from a seed must be
// bit-identical across platforms, so we avoid std::mt19937 and implement
// splitmix64 + xoshiro256** exactly as published.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += kGolden;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, n). Modulo reduction keeps the stream contract simple and
  // bit-stable; the bias at these n (< 2^32) is irrelevant here.
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t next_range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool chance(double p) { return next_double() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4];
};

// Derives an independent stream for a substream index (per document, per
// bucket, ...) so items can be generated in any order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ ((index + 1) * kGolden);
}

}  // namespace vwg
