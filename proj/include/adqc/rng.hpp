#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "adqc/util.hpp"

namespace adqc {

// SplitMix64 (Steele, Lea & Flood). Full 64-bit state, passes BigCrush,
// and trivially reproducible across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1): never returns an exact endpoint, safe for quantile
  // transforms.
  double uniform_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ValidationError("below: n must be positive");
    std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream from (seed, purpose, keys...). Streams are
// stable under insertion of unrelated keys: adding a respondent never
// perturbs another respondent's draws.
inline SplitMix64 stream(std::uint64_t seed,
                         std::initializer_list<std::string_view> parts) {
  std::uint64_t h = fnv1a64_u64(seed);
  for (std::string_view p : parts) {
    h = fnv1a64("\x1f", h);
    h = fnv1a64(p, h);
  }
  return SplitMix64{h};
}

inline SplitMix64 stream(std::uint64_t seed, std::string_view purpose) {
  return stream(seed, {purpose});
}

// Fisher-Yates using the stream's bounded draws; uniform over permutations.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Acklam's rational approximation to the standard normal quantile,
// |relative error| < 1.15e-9 over (0, 1). Deterministic: no libm calls
// besides sqrt/log.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("normal_quantile: p must lie strictly in (0,1)");
  }
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  constexpr double phigh = 1.0 - plow;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > phigh) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// N(mean, sd^2) draw via the inverse CDF; one uniform per normal keeps
// draw counts predictable for stream accounting.
inline double normal(SplitMix64& rng, double mean = 0.0, double sd = 1.0) {
  return mean + sd * normal_quantile(rng.uniform_open());
}

}  // namespace adqc
