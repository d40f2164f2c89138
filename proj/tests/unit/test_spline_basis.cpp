#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "splinehmm/densities.hpp"
#include "splinehmm/spline_basis.hpp"

using namespace splinehmm;

TEST(SplineBasis, SizeIsTwoKPlusOne) {
  EXPECT_EQ(build_basis(-1.0, 1.0, 15).size(), 31u);
  EXPECT_EQ(build_basis(-1.0, 1.0, 25).size(), 51u);
}

TEST(SplineBasis, RejectsBadArguments) {
  EXPECT_THROW(build_basis(1.0, 1.0, 5), ConfigError);
  EXPECT_THROW(build_basis(0.0, 1.0, 1), ConfigError);
  EXPECT_THROW(build_basis(0.0, std::nan(""), 5), ConfigError);
  EXPECT_THROW(build_basis(0.0, INFINITY, 5), ConfigError);
}

TEST(SplineBasis, KnotsEquallySpaced) {
  const SplineBasis b = build_basis(-3.0, 7.0, 10);
  const auto& t = b.grid().knots();
  const double h = b.grid().spacing();
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_NEAR(t[i] - t[i - 1], h, 1e-12 * h);
  EXPECT_LE(b.support_lower(), -3.0);
  EXPECT_GE(b.support_upper(), 7.0);
}

TEST(SplineBasis, EachDensityIntegratesToOne) {
  const SplineBasis b = build_basis(-2.0, 5.0, 15);
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double mass =
        oracle::gauss_legendre([&](double x) { return b.value(j, x); }, b.support_begin(j), b.support_end(j), 4);
    EXPECT_NEAR(mass, 1.0, 1e-8) << "j=" << j;
  }
}

TEST(SplineBasis, MatchesCoxDeBoorRecurrence) {
  const SplineBasis b = build_basis(-1.0, 2.0, 6);
  const auto& knots = b.grid().knots();
  const double h = b.grid().spacing();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(b.support_lower() - 0.5, b.support_upper() + 0.5);
  for (int n = 0; n < 1000; ++n) {
    const double x = u(rng);
    const auto v = b.eval(x);
    for (std::size_t j = 0; j < b.size(); ++j)
      EXPECT_NEAR(v[j] * h, oracle::cox_de_boor(knots, j, 3, x), 1e-12);
  }
}

TEST(SplineBasis, ZeroOutsideSupport) {
  const SplineBasis b = build_basis(0.0, 1.0, 5);
  for (double v : b.eval(b.support_lower() - 1e-9)) EXPECT_EQ(v, 0.0);
  for (double v : b.eval(b.support_upper() + 1.0)) EXPECT_EQ(v, 0.0);
}

TEST(SplineBasis, AtMostFourNonzeroAndNonnegative) {
  const SplineBasis b = build_basis(0.0, 10.0, 8);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 12.0);
  for (int n = 0; n < 500; ++n) {
    const auto v = b.eval(u(rng));
    int nonzero = 0;
    for (double e : v) {
      EXPECT_GE(e, 0.0);
      nonzero += e > 0.0;
    }
    EXPECT_LE(nonzero, 4);
  }
}

TEST(SplineBasis, PartitionOfUnityAtInteriorKnot) {
  const SplineBasis b = build_basis(0.0, 10.0, 8);
  const double h = b.grid().spacing();
  const double knot = b.grid().knots()[7];
  const auto v = b.eval(knot);
  double sum = 0.0;
  int nonzero = 0;
  for (double e : v) {
    sum += e * h;
    nonzero += e > 0.0;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // A cubic B-spline vanishes at its end knots, so three are nonzero at a knot.
  EXPECT_EQ(nonzero, 3);
}

TEST(SplineBasis, CentralDensityPeaksAtItsCenter) {
  const SplineBasis b = build_basis(-4.0, 4.0, 7);
  const std::size_t mid = 7;
  const auto v = b.eval(b.center(mid));
  EXPECT_EQ(*std::max_element(v.begin(), v.end()), v[mid]);
}

TEST(SplineBasis, LocalValuesAgreeWithEval) {
  const SplineBasis b = build_basis(-1.0, 1.0, 5);
  for (double x : {-1.3, -0.77, 0.0, 0.31, 0.999, 1.2}) {
    const auto all = b.eval(x);
    const auto loc = b.local(x);
    for (std::size_t r = 0; r < loc.count; ++r) EXPECT_DOUBLE_EQ(loc.values[r], all[loc.first + r]);
  }
}

TEST(SplineBasis, CdfMatchesQuadrature) {
  const SplineBasis b = build_basis(0.0, 4.0, 5);
  std::mt19937_64 rng(5);
  for (std::size_t j = 0; j < b.size(); ++j) {
    std::uniform_real_distribution<double> u(b.support_begin(j), b.support_end(j));
    for (int n = 0; n < 10; ++n) {
      const double x = u(rng);
      const double q = oracle::gauss_legendre([&](double z) { return b.value(j, z); }, b.support_begin(j), x, 64);
      EXPECT_NEAR(b.cdf(j, x), q, 1e-8);
    }
    EXPECT_EQ(b.cdf(j, b.support_begin(j) - 1.0), 0.0);
    EXPECT_EQ(b.cdf(j, b.support_end(j) + 1.0), 1.0);
  }
}

TEST(SplineBasis, QuantileInvertsCdf) {
  const SplineBasis b = build_basis(0.0, 4.0, 5);
  for (std::size_t j = 0; j < b.size(); ++j)
    for (double p : {0.001, 0.1, 0.3, 0.5, 0.77, 0.999}) EXPECT_NEAR(b.cdf(j, b.quantile(j, p)), p, 1e-10);
}

TEST(SplineBasis, MeanIsSupportMidpoint) {
  const SplineBasis b = build_basis(-2.0, 3.0, 6);
  const auto m = basis_moments(b);
  for (std::size_t j = 0; j < b.size(); ++j)
    EXPECT_NEAR(m[j].mean, 0.5 * (b.support_begin(j) + b.support_end(j)), 1e-12);
}

TEST(SplineBasis, SecondMomentMatchesQuadratureAndMonteCarlo) {
  const SplineBasis b = build_basis(-2.0, 3.0, 6);
  const auto m = basis_moments(b);
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double q = oracle::gauss_legendre([&](double x) { return x * x * b.value(j, x); }, b.support_begin(j),
                                            b.support_end(j), 4);
    EXPECT_NEAR(m[j].second, q, 1e-10);
  }
  // Monte Carlo draw through the inverse cdf of one element.
  const std::size_t j = 3;
  Rng rng(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = b.quantile(j, uniform_open(rng));
    s += x * x;
    s2 += x * x * x * x;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, m[j].second, 3.0 * se);
}

TEST(SplineBasis, ShiftMovesMeansExactly) {
  const SplineBasis a(0.0, 5.0, 4);
  const SplineBasis b(2.0, 7.0, 4);
  const auto ma = basis_moments(a);
  const auto mb = basis_moments(b);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(mb[j].mean - ma[j].mean, 2.0, 1e-12);
}

TEST(SplineBasis, SeriesBasisWidensByHalfSd) {
  const std::vector<double> x{1.0, 2.0, 3.0, std::nan(""), 4.0, 5.0};
  const SplineBasis b = basis_for_series(x, 5);
  const double sd = std::sqrt(2.5);  // sample sd of 1..5
  EXPECT_NEAR(b.grid().lower(), 1.0 - 0.5 * sd, 1e-12);
  EXPECT_NEAR(b.grid().upper(), 5.0 + 0.5 * sd, 1e-12);
}
