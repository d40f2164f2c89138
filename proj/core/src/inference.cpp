#include "splinehmm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "splinehmm/parallel.hpp"
#include "splinehmm/simulation.hpp"

namespace splinehmm {
namespace {

constexpr std::size_t kMinReplicates = 20;

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
}

std::vector<const HmmModel*> usable(const BootstrapEnsemble& ensemble) {
  std::vector<const HmmModel*> out;
  for (std::size_t r = 0; r < ensemble.replicates.size(); ++r)
    if (ensemble.converged[r]) out.push_back(&ensemble.replicates[r]);
  if (out.size() < kMinReplicates)
    throw NumericalError("bootstrap has " + std::to_string(out.size()) + " converged replicates, at least " +
                         std::to_string(kMinReplicates) + " are required");
  return out;
}

double band_coverage(const std::vector<std::vector<double>>& curves, const std::vector<double>& mid,
                     const std::vector<double>& half, double c) {
  std::size_t inside = 0;
  for (const auto& f : curves) {
    bool ok = true;
    for (std::size_t g = 0; g < f.size() && ok; ++g)
      ok = f[g] >= mid[g] - c * half[g] && f[g] <= mid[g] + c * half[g];
    if (ok) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(curves.size());
}

}  // namespace

std::size_t BootstrapEnsemble::converged_count() const {
  return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), char{1}));
}

BootstrapEnsemble bootstrap(const HmmModel& model, std::size_t length, std::size_t replicates,
                            const FitConfig& config, std::uint64_t seed, unsigned threads) {
  if (replicates < 1) throw ConfigError("bootstrap: number of replicates must be >= 1");
  if (length < 2) throw ConfigError("bootstrap: series length must be >= 2");
  model.validate();
  const ParameterLayout layout(config.structure);
  if (layout.states() != model.states()) throw ConfigError("bootstrap: model and config disagree on the number of states");

  BootstrapEnsemble ensemble;
  const auto& fam = config.structure.families;
  const bool same_family = std::all_of(fam.begin(), fam.end(), [&](EmissionFamily f) { return f == fam.front(); });
  ensemble.generator = same_family ? sort_states_by_mean(model) : model;
  ensemble.seed = seed;
  ensemble.length = length;
  ensemble.replicates.resize(replicates);
  ensemble.converged.assign(replicates, 0);
  const std::vector<double> warm = layout.pack(ensemble.generator);

  parallel_for(replicates, threads, [&](std::size_t r) {
    const std::uint64_t stream = derive_seed(seed, r);
    Rng rng(stream);
    const SimulatedSeries sim = simulate_series(ensemble.generator, length, rng);
    FitConfig cfg = config;
    cfg.seed = derive_seed(stream, 1);
    cfg.threads = 1;
    cfg.warm_starts = {warm};
    try {
      FitResult res = fit(sim.observations, cfg);
      ensemble.replicates[r] = std::move(res.model);
      ensemble.converged[r] = 1;
    } catch (const NumericalError&) {
      ensemble.converged[r] = 0;
    }
  });
  return ensemble;
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("empirical_quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("empirical_quantile: probability outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

TpmIntervals tpm_intervals(const BootstrapEnsemble& ensemble, double level) {
  check_level(level);
  const auto models = usable(ensemble);
  const Eigen::Index n = ensemble.generator.gamma.rows();
  TpmIntervals out;
  out.level = level;
  out.replicates = models.size();
  out.lower.resize(n, n);
  out.upper.resize(n, n);
  std::vector<double> values(models.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (std::size_t r = 0; r < models.size(); ++r) values[r] = models[r]->gamma(i, j);
      out.lower(i, j) = empirical_quantile(values, 0.5 * (1.0 - level));
      out.upper(i, j) = empirical_quantile(values, 0.5 * (1.0 + level));
    }
  }
  return out;
}

std::string to_string(BandType type) { return type == BandType::Pointwise ? "pointwise" : "simultaneous"; }

std::vector<double> band_grid(const StateDensity& density, std::size_t points) {
  if (points < 2) throw ConfigError("band_grid: need at least two points");
  double lo = 0.0;
  double hi = 0.0;
  if (const auto* s = std::get_if<SplineDensity>(&density)) {
    lo = s->basis().support_lower();
    hi = s->basis().support_upper();
  } else {
    const double m = mean(density);
    const double sd = std::sqrt(variance(density));
    lo = m - 4.0 * sd;
    hi = m + 4.0 * sd;
  }
  std::vector<double> grid(points);
  for (std::size_t g = 0; g < points; ++g)
    grid[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(points - 1);
  return grid;
}

DensityBand density_band(const BootstrapEnsemble& ensemble, std::size_t state, const std::vector<double>& grid,
                         double level, BandType type) {
  check_level(level);
  if (grid.empty()) throw ConfigError("density_band: empty grid");
  if (state >= ensemble.generator.states()) throw ConfigError("density_band: state index out of range");
  const auto models = usable(ensemble);

  std::vector<std::vector<double>> curves(models.size(), std::vector<double>(grid.size()));
  double scale = 0.0;
  for (std::size_t r = 0; r < models.size(); ++r)
    for (std::size_t g = 0; g < grid.size(); ++g) {
      curves[r][g] = pdf(models[r]->emissions[state], grid[g]);
      scale = std::max(scale, curves[r][g]);
    }

  DensityBand band;
  band.grid = grid;
  band.level = level;
  band.type = type;
  band.lower.resize(grid.size());
  band.upper.resize(grid.size());
  std::vector<double> column(models.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (std::size_t r = 0; r < models.size(); ++r) column[r] = curves[r][g];
    band.lower[g] = empirical_quantile(column, 0.5 * (1.0 - level));
    band.upper[g] = empirical_quantile(column, 0.5 * (1.0 + level));
  }

  std::vector<double> mid(grid.size());
  std::vector<double> half(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    mid[g] = 0.5 * (band.lower[g] + band.upper[g]);
    half[g] = 0.5 * (band.upper[g] - band.lower[g]);
  }

  if (type == BandType::Pointwise) {
    band.coverage = band_coverage(curves, mid, half, 1.0);
    return band;
  }

  // Zero-width points (all but a few curves agree) would make inflation
  // useless there, so give them a tiny width relative to the curve scale.
  std::vector<double> width = half;
  for (auto& w : width) w = std::max(w, 1e-9 * scale);

  double lo = 1.0;
  double hi = 1.0;
  if (band_coverage(curves, mid, width, 1.0) < level) {
    hi = 2.0;
    while (band_coverage(curves, mid, width, hi) < level) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e15) throw NumericalError("density_band: inflation did not reach the requested coverage");
    }
    while (hi - lo > 1e-3) {
      const double c = 0.5 * (lo + hi);
      if (band_coverage(curves, mid, width, c) >= level)
        hi = c;
      else
        lo = c;
    }
  }
  band.inflation = hi;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    band.lower[g] = std::min(band.lower[g], mid[g] - hi * width[g]);
    band.upper[g] = std::max(band.upper[g], mid[g] + hi * width[g]);
  }
  band.coverage = band_coverage(curves, mid, width, hi);
  return band;
}

ResidualSeries pseudo_residuals(const HmmModel& model, Series series) {
  model.validate();
  const ForwardPass fp = forecast_state_probs(model, series);
  if (!std::isfinite(fp.log_likelihood)) throw NumericalError("pseudo_residuals: the series has zero likelihood");
  const std::size_t n = model.states();
  ResidualSeries out;
  out.uniform.assign(series.size(), kMissing);
  out.residual.assign(series.size(), kMissing);
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (is_missing(series[t])) {
      out.gaps.push_back(t);
      continue;
    }
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) u += fp.predictive[t * n + i] * cdf(model.emissions[i], series[t]);
    u = std::clamp(u, kResidualClamp, 1.0 - kResidualClamp);
    out.uniform[t] = u;
    out.residual[t] = normal_quantile(u);
  }
  return out;
}

JarqueBera jarque_bera(std::span<const double> values) {
  std::vector<double> x;
  for (double v : values)
    if (!std::isnan(v)) x.push_back(v);
  if (x.size() < 8) throw ConfigError("jarque_bera: need at least 8 values");
  const double n = static_cast<double>(x.size());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mu;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 0.0) || !std::isfinite(m2)) throw NumericalError("jarque_bera: input has zero variance");
  const double skew = m3 / std::pow(m2, 1.5);
  const double excess = m4 / (m2 * m2) - 3.0;
  JarqueBera out;
  out.n = x.size();
  out.statistic = n / 6.0 * (skew * skew + 0.25 * excess * excess);
  // Chi-squared with two degrees of freedom has survival exp(-x / 2).
  out.p_value = std::exp(-0.5 * out.statistic);
  return out;
}

double ks_uniform(std::span<const double> values) {
  std::vector<double> u;
  for (double v : values)
    if (!std::isnan(v)) u.push_back(v);
  if (u.empty()) throw ConfigError("ks_uniform: no values");
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / n);
  }
  return d;
}

}  // namespace splinehmm
