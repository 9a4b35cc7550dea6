#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "capgan/error.hpp"

namespace capgan {

// Seeded random source. All sampling goes through these helpers so that
// output streams are reproducible for a given seed and binary.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0, 1)
  double uniform() {
    return std::ldexp(static_cast<double>(eng_() >> 11), -53);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    // Box-Muller; one value per call keeps the stream simple.
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double gumbel() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(-std::log(u));
  }

  // CDF-inversion categorical draw over p[0..n), which must sum to ~1.
  std::size_t categorical(const double* p, std::size_t n) {
    double u = uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] <= 0.0) continue;
      acc += p[i];
      last = i;
      if (u < acc) return i;
    }
    return last;
  }

  std::uint64_t raw() { return eng_(); }

  // Independent child stream (for per-caption / per-probe seeding).
  std::uint64_t derive() { return eng_() ^ 0x9e3779b97f4a7c15ull; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace capgan
