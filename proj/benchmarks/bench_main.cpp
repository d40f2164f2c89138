#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "splinehmm/estimation.hpp"
#include "splinehmm/simulation.hpp"

using namespace splinehmm;

namespace {

std::vector<double> series(std::size_t length) {
  Rng rng(42);
  return simulate_series(default_scenario().truth, length, rng).observations;
}

ParameterLayout spline_layout(const std::vector<double>& x, std::size_t states, int k) {
  return ParameterLayout(
      ModelStructure::splines(states, std::make_shared<const SplineBasis>(basis_for_series(x, k))));
}

std::vector<double> start(const ParameterLayout& layout, const std::vector<double>& x) {
  FitConfig c;
  c.structure = layout.structure();
  c.penalty.lambda.assign(layout.structure().states(), 0.0);
  c.restarts = 1;
  Rng rng(7);
  return initial_points(c, x, rng).front();
}

}  // namespace

static void BM_BasisEval(benchmark::State& state) {
  const SplineBasis b = build_basis(-10.0, 10.0, static_cast<int>(state.range(0)));
  double x = -9.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(b.local(x));
    x = x > 9.5 ? -9.5 : x + 0.013;
  }
}
BENCHMARK(BM_BasisEval)->Arg(15)->Arg(25);

static void BM_ForwardPass(benchmark::State& state) {
  const auto x = series(static_cast<std::size_t>(state.range(0)));
  const ParameterLayout layout = spline_layout(x, 3, 25);
  const HmmModel m = layout.unpack(start(layout, x));
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(m, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardPass)->Arg(800)->Arg(2880)->Arg(100000);

static void BM_Viterbi(benchmark::State& state) {
  const auto x = series(static_cast<std::size_t>(state.range(0)));
  const ParameterLayout layout = spline_layout(x, 3, 25);
  const HmmModel m = layout.unpack(start(layout, x));
  for (auto _ : state) benchmark::DoNotOptimize(viterbi(m, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Viterbi)->Arg(2880);

static void BM_ObjectiveGradient(benchmark::State& state) {
  const auto x = series(2880);
  const ParameterLayout layout = spline_layout(x, 3, 25);
  const GradientMethod method = state.range(0) == 0 ? GradientMethod::Analytic : GradientMethod::CentralDifference;
  const PenalizedObjective f(layout, x, {2, {1000.0, 1000.0, 1000.0}}, method);
  const auto theta = start(layout, x);
  std::vector<double> grad(theta.size());
  for (auto _ : state) benchmark::DoNotOptimize(f(theta, grad));
  state.SetLabel(state.range(0) == 0 ? "analytic" : "central difference");
}
BENCHMARK(BM_ObjectiveGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Fit(benchmark::State& state) {
  const auto x = series(800);
  FitConfig c;
  c.structure = spline_layout(x, 2, 15).structure();
  c.penalty.lambda = {2048.0, 2048.0};
  c.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fit(x, c));
}
BENCHMARK(BM_Fit)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
