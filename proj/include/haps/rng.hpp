#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

// Deterministic randomness. Every consumer derives its generator from the
// run seed plus structural coordinates (stage, iteration, sample index, ...)
// via mix(), so any part of a run can be reproduced without replaying the
// parts before it. Only mt19937_64 itself comes from the standard library:
// its output sequence is pinned by the standard, while the std::
// distributions are implementation-defined, so the draws below are written
// out by hand.

namespace haps {

constexpr std::uint64_t kSeedGold = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer.
constexpr std::uint64_t mix_fin(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Fold one coordinate word into a seed.
constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t word) {
  return mix_fin(seed + kSeedGold + word * 0xD1B54A32D192ED03ULL);
}

template <typename... Rest>
constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t word, Rest... rest) {
  return mix(mix(seed, word), rest...);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform double in [0, 1), 53 random bits.
  double u01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t reject = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= reject) return r % n;
    }
  }

  // Fisher-Yates, descending index convention.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace haps
