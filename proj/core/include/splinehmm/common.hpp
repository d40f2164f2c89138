#ifndef SPLINEHMM_COMMON_HPP
#define SPLINEHMM_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace splinehmm {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, configuration or input data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation that cannot produce a finite, meaningful result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Observation series are plain spans of doubles; NaN marks a missing value.
using Series = std::span<const double>;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a master seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform draw on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw via Box-Muller; portable across standard libraries.
inline double standard_normal(Rng& rng) {
  const double u1 = uniform_open(rng);
  const double u2 = uniform_open(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace splinehmm

#endif  // SPLINEHMM_COMMON_HPP
