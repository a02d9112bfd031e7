#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tfa {

/// Mixes a 64-bit state and returns the next value (splitmix64).
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent stream seed from a base seed and a list of tags
/// (domain id, class id, sample index, ...). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Deterministic random source. All floating-point draws are built from raw
/// 64-bit words with explicit arithmetic, so streams do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call).
  double gaussian();

  /// Uniform integer in [lo, hi], inclusive. Rejection sampled, no modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tfa
