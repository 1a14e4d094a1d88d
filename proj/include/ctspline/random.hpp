#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctspline/error.hpp"

namespace ctspline {

// SplitMix64 (Steele, Lea, Flood 2014). The full algorithm is the three
// constants below; outputs are identical on every platform and easy to
// reproduce in other languages.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1): top 53 bits, offset by half an ulp.
  double uniform_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

/// Laplace(0, b) with b = sqrt(variance / 2) by inverse CDF:
/// x = -b sign(v) ln(1 - 2|v|), v uniform on (-1/2, 1/2).
inline std::vector<double> laplace_noise(std::uint64_t seed, double variance,
                                         std::size_t count) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw Error(ErrorKind::InvalidArgument, "noise variance must be finite and > 0");
  }
  const double scale = std::sqrt(variance / 2.0);
  SplitMix64 rng(seed);
  std::vector<double> out(count);
  for (auto& x : out) {
    const double v = rng.uniform_open() - 0.5;
    const double sign = v < 0.0 ? -1.0 : 1.0;
    x = -scale * sign * std::log1p(-2.0 * std::abs(v));
  }
  return out;
}

inline double laplace_scale(double variance) { return std::sqrt(variance / 2.0); }

/// Analytic CDF of Laplace(0, scale).
inline double laplace_cdf(double x, double scale) {
  return x < 0.0 ? 0.5 * std::exp(x / scale) : 1.0 - 0.5 * std::exp(-x / scale);
}

}  // namespace ctspline
