#pragma once

#include <cstdint>
#include <vector>

namespace titlegen::tensor {

// xoshiro256** seeded through splitmix64. Hand-rolled instead of <random>
// engines/distributions so that every stream is reproducible across standard
// library implementations, which the corpus splits and tests rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased integer in [0, n) via rejection sampling. n must be > 0.
  std::uint64_t bounded(std::uint64_t n);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(bounded(i + 1));
      if (j != i) std::swap(v[i], v[j]);
    }
  }

  // Derives a decorrelated seed for a sub-stream (per epoch, per example...).
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t s_[4];
};

}  // namespace titlegen::tensor
