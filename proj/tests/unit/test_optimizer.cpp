#include <gtest/gtest.h>

#include <cmath>

#include "splinehmm/optimizer.hpp"

using namespace splinehmm;

namespace {

double rosenbrock(std::span<const double> x, std::span<double> g) {
  const double a = 1.0 - x[0];
  const double b = x[1] - x[0] * x[0];
  if (!g.empty()) {
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
  }
  return a * a + 100.0 * b * b;
}

}  // namespace

TEST(Optimizer, BfgsSolvesRosenbrock) {
  const OptimizerResult r = minimize_bfgs(rosenbrock, {-1.2, 1.0});
  EXPECT_TRUE(r.converged());
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
}

TEST(Optimizer, QuadraticConvergesToGradientTolerance) {
  const Objective f = [](std::span<const double> x, std::span<double> g) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = static_cast<double>(i + 1);
      v += 0.5 * w * (x[i] - 1.0) * (x[i] - 1.0);
      if (!g.empty()) g[i] = w * (x[i] - 1.0);
    }
    return v;
  };
  OptimizerOptions o;
  o.rel_tolerance = 0.0;
  const OptimizerResult r = minimize_bfgs(f, std::vector<double>(6, 5.0), o);
  EXPECT_EQ(r.status, OptimizerStatus::GradientTolerance);
  EXPECT_LE(r.grad_max_norm, 1e-6);
}

TEST(Optimizer, NonFiniteStartIsReported) {
  const Objective f = [](std::span<const double>, std::span<double>) { return INFINITY; };
  const OptimizerResult r = minimize_bfgs(f, {0.0});
  EXPECT_EQ(r.status, OptimizerStatus::NonFiniteStart);
  EXPECT_FALSE(r.converged());
}

TEST(Optimizer, IterationLimitIsReported) {
  OptimizerOptions o;
  o.max_iterations = 2;
  const OptimizerResult r = minimize_bfgs(rosenbrock, {-1.2, 1.0}, o);
  EXPECT_EQ(r.status, OptimizerStatus::IterationLimit);
}

TEST(Optimizer, NewtonPolishReachesTightGradient) {
  OptimizerOptions o;
  o.polish_iterations = 50;
  const OptimizerResult r = polish_newton(rosenbrock, {0.8, 0.6}, o);
  EXPECT_LE(r.grad_max_norm, 1e-6);
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
}

TEST(Optimizer, MinimizeKeepsBestOfBothStages) {
  OptimizerOptions o;
  o.polish_iterations = 50;
  const OptimizerResult r = minimize(rosenbrock, {-1.2, 1.0}, o);
  const OptimizerResult b = minimize_bfgs(rosenbrock, {-1.2, 1.0}, o);
  EXPECT_LE(r.value, b.value);
  EXPECT_TRUE(r.converged());
}

TEST(Optimizer, FiniteDifferencesAgree) {
  const auto f = [](std::span<const double> x) { return std::sin(x[0]) * std::exp(x[1]) + x[0] * x[1] * x[1]; };
  const std::vector<double> x{0.7, -0.3};
  const auto c = central_difference_gradient(f, x);
  const auto fw = forward_difference_gradient(f, x);
  const double g0 = std::cos(0.7) * std::exp(-0.3) + 0.09;
  const double g1 = std::sin(0.7) * std::exp(-0.3) + 2 * 0.7 * -0.3;
  EXPECT_NEAR(c[0], g0, 1e-9);
  EXPECT_NEAR(c[1], g1, 1e-9);
  EXPECT_NEAR(fw[0], g0, 1e-6);
  EXPECT_NEAR(fw[1], g1, 1e-6);
}

TEST(Optimizer, StatusNames) {
  EXPECT_EQ(to_string(OptimizerStatus::GradientTolerance), "gradient_tolerance");
}
