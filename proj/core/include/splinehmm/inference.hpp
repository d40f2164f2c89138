#ifndef SPLINEHMM_INFERENCE_HPP
#define SPLINEHMM_INFERENCE_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "splinehmm/common.hpp"
#include "splinehmm/estimation.hpp"
#include "splinehmm/hmm.hpp"

namespace splinehmm {

/// Models refitted to series simulated from a generating model.
struct BootstrapEnsemble {
  HmmModel generator;
  std::vector<HmmModel> replicates;  ///< empty model where the refit failed
  std::vector<char> converged;
  std::uint64_t seed = 0;
  std::size_t length = 0;

  std::size_t converged_count() const;
  std::size_t failed_count() const { return converged.size() - converged_count(); }
};

/// Parametric bootstrap. `config` fixes the structure and lambda; every
/// replicate also starts from the generator's working vector. Replicate r
/// uses seeds derived from (seed, r), so the result does not depend on
/// `threads`.
BootstrapEnsemble bootstrap(const HmmModel& model, std::size_t length, std::size_t replicates,
                            const FitConfig& config, std::uint64_t seed, unsigned threads = 1);

/// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double p);

struct TpmIntervals {
  Matrix lower;
  Matrix upper;
  double level = 0.95;
  std::size_t replicates = 0;
};

/// Entrywise quantiles at (1 - level) / 2 and (1 + level) / 2 over converged replicates.
TpmIntervals tpm_intervals(const BootstrapEnsemble& ensemble, double level);

enum class BandType { Pointwise, Simultaneous };
std::string to_string(BandType type);

struct DensityBand {
  std::vector<double> grid;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
  BandType type = BandType::Pointwise;
  /// Factor applied to the pointwise half-widths (1 for pointwise bands).
  double inflation = 1.0;
  /// Fraction of replicate curves lying entirely inside the band.
  double coverage = 0.0;
};

/// 512 equally spaced points over the basis support for spline states, or
/// mean +- 4 sd otherwise.
std::vector<double> band_grid(const StateDensity& density, std::size_t points = 512);

/// Pointwise quantile band of the replicate densities of `state`, or its
/// simultaneous version: the smallest c >= 1 (bisection to 1e-3) for which
/// at least `level` of the curves fit inside midpoint +- c * half-width.
DensityBand density_band(const BootstrapEnsemble& ensemble, std::size_t state, const std::vector<double>& grid,
                         double level, BandType type);

struct ResidualSeries {
  std::vector<double> uniform;   ///< forecast cdf values, NaN where x_t is missing
  std::vector<double> residual;  ///< Phi^{-1}(uniform)
  std::vector<std::size_t> gaps;  ///< indices of missing observations
};

inline constexpr double kResidualClamp = 1e-12;

/// One-step-ahead forecast pseudo-residuals.
ResidualSeries pseudo_residuals(const HmmModel& model, Series series);

struct JarqueBera {
  double statistic = 0.0;
  double p_value = 0.0;
  std::size_t n = 0;
};

/// Ignores NaN entries; needs n >= 8 and positive variance.
JarqueBera jarque_bera(std::span<const double> values);

/// Kolmogorov-Smirnov distance of the sample from Uniform(0, 1) (NaN skipped).
double ks_uniform(std::span<const double> values);

}  // namespace splinehmm

#endif  // SPLINEHMM_INFERENCE_HPP
