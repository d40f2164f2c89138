#ifndef SPLINEHMM_SPLINE_BASIS_HPP
#define SPLINEHMM_SPLINE_BASIS_HPP

#include <array>
#include <cstddef>
#include <vector>

#include "splinehmm/common.hpp"

namespace splinehmm {

inline constexpr int kSplineDegree = 3;

/// Equally spaced knots: `intervals` cells on [lower, upper] plus three
/// extension knots on each side, so that every cubic B-spline touching
/// [lower, upper] has its full support on the grid.
class KnotGrid {
 public:
  KnotGrid(double lower, double upper, int intervals);

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double spacing() const { return spacing_; }
  int intervals() const { return intervals_; }
  const std::vector<double>& knots() const { return knots_; }

 private:
  double lower_;
  double upper_;
  double spacing_;
  int intervals_;
  std::vector<double> knots_;
};

/// Mean and second moment of one basis density.
struct BasisMoment {
  double mean;
  double second;
};

/// The 2K+1 standardized cubic B-spline densities phi_{-K}..phi_K.
///
/// Basis functions are addressed by position j = k + K in [0, 2K]; phi_j is
/// supported on [t_j, t_{j+4}] and integrates to one. Positions increase with
/// the support location.
class SplineBasis {
 public:
  /// Nonzero basis values at a point: values[r] belongs to position first + r.
  struct LocalValues {
    std::size_t first = 0;
    std::size_t count = 0;
    std::array<double, 4> values{};
  };

  /// Knot range [lower, upper] and half-width K (K >= 2).
  SplineBasis(double lower, double upper, int half_width);

  int half_width() const { return half_width_; }
  std::size_t size() const { return static_cast<std::size_t>(2 * half_width_ + 1); }
  const KnotGrid& grid() const { return grid_; }

  /// Smallest and largest x with a nonzero basis value.
  double support_lower() const { return grid_.knots().front(); }
  double support_upper() const { return grid_.knots().back(); }

  double support_begin(std::size_t j) const { return grid_.knots()[j]; }
  double support_end(std::size_t j) const { return grid_.knots()[j + 4]; }
  double center(std::size_t j) const { return grid_.knots()[j] + 2.0 * grid_.spacing(); }

  LocalValues local(double x) const;

  /// All 2K+1 values; zero outside the support.
  std::vector<double> eval(double x) const;

  double value(std::size_t j, double x) const;

  /// Integral of phi_j from -infinity to x, in closed form.
  double cdf(std::size_t j, double x) const;

  /// Inverse of cdf(j, .) for p in (0, 1).
  double quantile(std::size_t j, double p) const;

  std::vector<BasisMoment> moments() const;

  bool operator==(const SplineBasis& other) const {
    return half_width_ == other.half_width_ && grid_.lower() == other.grid_.lower() &&
           grid_.upper() == other.grid_.upper();
  }

 private:
  int half_width_;
  KnotGrid grid_;
};

/// Basis on [data_min, data_max] with 2K+1 elements.
SplineBasis build_basis(double data_min, double data_max, int half_width);

/// Basis on the observed range widened by half a standard deviation on each
/// side. Missing values are ignored.
SplineBasis basis_for_series(Series series, int half_width);

std::vector<double> eval_basis(const SplineBasis& basis, double x);

std::vector<BasisMoment> basis_moments(const SplineBasis& basis);

}  // namespace splinehmm

#endif  // SPLINEHMM_SPLINE_BASIS_HPP
