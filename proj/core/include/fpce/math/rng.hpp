#pragma once

#include <cstdint>
#include <random>

#include "fpce/math/normal.hpp"

namespace fpce {

// Seeded generator used everywhere randomness is needed. mt19937_64 is fully
// specified by the standard and the variate transforms below are written out
// explicitly, so streams are reproducible across compilers and platforms
// (std::normal_distribution and friends are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() { return (gen_() >> 11) * 0x1p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal by inversion; the offset keeps u strictly inside (0,1).
  double gaussian() {
    double u = ((gen_() >> 11) + 0.5) * 0x1p-53;
    return norm_quantile(u);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fpce
