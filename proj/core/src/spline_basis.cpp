#include "splinehmm/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace splinehmm {
namespace {

// Uniform cubic B-spline pieces in local coordinate u in [0, 1), with the
// support [t_j, t_{j+4}] split into pieces 0..3. Values integrate to 1 over
// the four pieces (in u units), so they are already standardized.
double piece_value(int piece, double u) {
  switch (piece) {
    case 0:
      return u * u * u / 6.0;
    case 1:
      return (((-3.0 * u + 3.0) * u + 3.0) * u + 1.0) / 6.0;
    case 2:
      return ((3.0 * u - 6.0) * u * u + 4.0) / 6.0;
    case 3: {
      const double v = 1.0 - u;
      return v * v * v / 6.0;
    }
    default:
      return 0.0;
  }
}

// Antiderivative of piece_value on [0, u].
double piece_integral(int piece, double u) {
  switch (piece) {
    case 0:
      return u * u * u * u / 24.0;
    case 1:
      return (((-0.75 * u + 1.0) * u + 1.5) * u + 1.0) * u / 6.0;
    case 2:
      return ((0.75 * u - 2.0) * u * u + 4.0) * u / 6.0;
    case 3: {
      const double v = 1.0 - u;
      return (1.0 - v * v * v * v) / 24.0;
    }
    default:
      return 0.0;
  }
}

constexpr std::array<double, 5> kCumulative = {0.0, 1.0 / 24.0, 12.0 / 24.0, 23.0 / 24.0, 1.0};

}  // namespace

KnotGrid::KnotGrid(double lower, double upper, int intervals)
    : lower_(lower), upper_(upper), spacing_(0.0), intervals_(intervals) {
  if (!std::isfinite(lower) || !std::isfinite(upper))
    throw ConfigError("knot grid bounds must be finite");
  if (!(upper > lower)) throw ConfigError("knot grid requires upper > lower");
  if (intervals < 1) throw ConfigError("knot grid requires at least one interval");
  spacing_ = (upper - lower) / intervals;
  const int count = intervals + 1 + 2 * kSplineDegree;
  knots_.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) knots_[static_cast<std::size_t>(i)] = lower + (i - kSplineDegree) * spacing_;
}

SplineBasis::SplineBasis(double lower, double upper, int half_width)
    : half_width_(half_width),
      grid_((half_width < 2) ? throw ConfigError("spline basis requires K >= 2, got K = " +
                                                 std::to_string(half_width))
                             : KnotGrid(lower, upper, 2 * half_width - 2)) {}

SplineBasis::LocalValues SplineBasis::local(double x) const {
  LocalValues out;
  const auto& knots = grid_.knots();
  if (!(x >= knots.front()) || !(x < knots.back())) return out;

  const double h = grid_.spacing();
  double s = (x - knots.front()) / h;
  const double nearest = std::round(s);
  if (std::abs(s - nearest) < 1e-12) s = nearest;
  const long last_cell = static_cast<long>(knots.size()) - 2;
  const long cell = std::min(static_cast<long>(std::floor(s)), last_cell);
  const double u = s - static_cast<double>(cell);

  // Cell c intersects the supports of positions c-3..c; position c - 3 + r
  // sees the cell as its piece (3 - r).
  const long n = static_cast<long>(size());
  const long first = std::max(0L, cell - 3);
  const long last = std::min(n - 1, cell);
  out.first = static_cast<std::size_t>(first);
  for (long j = first; j <= last; ++j) {
    const int piece = static_cast<int>(cell - j);
    out.values[out.count++] = piece_value(piece, u) / h;
  }
  return out;
}

std::vector<double> SplineBasis::eval(double x) const {
  std::vector<double> out(size(), 0.0);
  const LocalValues lv = local(x);
  for (std::size_t r = 0; r < lv.count; ++r) out[lv.first + r] = lv.values[r];
  return out;
}

double SplineBasis::value(std::size_t j, double x) const {
  const LocalValues lv = local(x);
  if (j < lv.first || j >= lv.first + lv.count) return 0.0;
  return lv.values[j - lv.first];
}

double SplineBasis::cdf(std::size_t j, double x) const {
  const double h = grid_.spacing();
  const double s = (x - support_begin(j)) / h;
  if (!(s > 0.0)) return 0.0;
  if (s >= 4.0) return 1.0;
  const int piece = static_cast<int>(std::floor(s));
  return kCumulative[static_cast<std::size_t>(piece)] + piece_integral(piece, s - piece);
}

double SplineBasis::quantile(std::size_t j, double p) const {
  const double h = grid_.spacing();
  if (!(p > 0.0)) return support_begin(j);
  if (!(p < 1.0)) return support_end(j);
  int piece = 0;
  while (piece < 3 && p >= kCumulative[static_cast<std::size_t>(piece) + 1]) ++piece;
  const double target = p - kCumulative[static_cast<std::size_t>(piece)];

  // Safeguarded Newton on a monotone quartic.
  double lo = 0.0, hi = 1.0, u = 0.5;
  for (int it = 0; it < 100; ++it) {
    const double f = piece_integral(piece, u) - target;
    if (f > 0.0) hi = u; else lo = u;
    const double d = piece_value(piece, u);
    double next = (d > 0.0) ? u - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) < 1e-15) { u = next; break; }
    u = next;
  }
  return support_begin(j) + (piece + u) * h;
}

std::vector<BasisMoment> SplineBasis::moments() const {
  // A standardized uniform cubic B-spline is the Irwin-Hall(4) density
  // scaled by h: variance 4/12 in cell units.
  const double h = grid_.spacing();
  std::vector<BasisMoment> out(size());
  for (std::size_t j = 0; j < size(); ++j) {
    const double m = center(j);
    out[j] = {m, m * m + h * h / 3.0};
  }
  return out;
}

SplineBasis build_basis(double data_min, double data_max, int half_width) {
  return SplineBasis(data_min, data_max, half_width);
}

SplineBasis basis_for_series(Series series, int half_width) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (double x : series) {
    if (is_missing(x)) continue;
    if (!std::isfinite(x)) throw ConfigError("series contains a non-finite value");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
    ++n;
  }
  if (n < 2) throw ConfigError("at least two observed values are needed to place knots");
  const double mean = sum / static_cast<double>(n);
  for (double x : series)
    if (!is_missing(x)) sum2 += (x - mean) * (x - mean);
  const double sd = std::sqrt(sum2 / static_cast<double>(n - 1));
  if (!(hi > lo)) throw ConfigError("series is constant; cannot place knots");
  return SplineBasis(lo - 0.5 * sd, hi + 0.5 * sd, half_width);
}

std::vector<double> eval_basis(const SplineBasis& basis, double x) { return basis.eval(x); }

std::vector<BasisMoment> basis_moments(const SplineBasis& basis) { return basis.moments(); }

}  // namespace splinehmm
