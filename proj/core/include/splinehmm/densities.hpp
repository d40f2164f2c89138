#ifndef SPLINEHMM_DENSITIES_HPP
#define SPLINEHMM_DENSITIES_HPP

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "splinehmm/common.hpp"
#include "splinehmm/spline_basis.hpp"

namespace splinehmm {

/// Mixture of standardized B-spline densities with softmax weights.
///
/// The logit of the central basis element (k = 0) is pinned at zero; the
/// remaining 2K logits are free.
class SplineDensity {
 public:
  /// `free_logits` holds beta_k for k != 0, in ascending k.
  SplineDensity(std::shared_ptr<const SplineBasis> basis, std::span<const double> free_logits);

  /// Logits are recovered as log(a_k / a_0); weights must be positive.
  static SplineDensity from_weights(std::shared_ptr<const SplineBasis> basis,
                                    std::span<const double> weights);

  /// All weights equal to 1 / (2K+1).
  static SplineDensity uniform(std::shared_ptr<const SplineBasis> basis);

  const SplineBasis& basis() const { return *basis_; }
  const std::shared_ptr<const SplineBasis>& basis_ptr() const { return basis_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> free_logits() const { return free_logits_; }

  double pdf(double x) const;
  double cdf(double x) const;
  double sample(Rng& rng) const;
  double mean() const;
  double second_moment() const;

 private:
  SplineDensity() = default;
  void update_weights();

  std::shared_ptr<const SplineBasis> basis_;
  std::vector<double> free_logits_;
  std::vector<double> weights_;
};

struct NormalDensity {
  double mean = 0.0;
  double sd = 1.0;
};

/// weight * N(mean1, sd1) + (1 - weight) * N(mean2, sd2).
struct NormalMixtureDensity {
  double mean1 = 0.0;
  double sd1 = 1.0;
  double mean2 = 0.0;
  double sd2 = 1.0;
  double weight = 0.5;
};

using StateDensity = std::variant<SplineDensity, NormalDensity, NormalMixtureDensity>;

double normal_pdf(double x, double mean, double sd);
double normal_cdf(double x, double mean, double sd);
/// Inverse standard normal cdf.
double normal_quantile(double p);

double pdf(const StateDensity& d, double x);
double cdf(const StateDensity& d, double x);
double sample(const StateDensity& d, Rng& rng);
double mean(const StateDensity& d);
double second_moment(const StateDensity& d);
double variance(const StateDensity& d);

/// Interval outside which the density is negligible (exactly zero for splines,
/// below ~1e-30 relative for the normal families).
std::pair<double, double> effective_support(const StateDensity& d);

/// "spline", "normal" or "normal_mixture".
std::string family_name(const StateDensity& d);

/// Throws ConfigError on invalid parameters (sd <= 0, weight outside [0,1]).
void validate(const StateDensity& d);

/// Kullback-Leibler divergence of `estimate` from `truth`, by the trapezoid
/// rule on 4096 points over the union of effective supports. Points where
/// truth < 1e-12 are skipped. Returns +infinity if the estimate vanishes
/// where the truth does not.
double kld(const StateDensity& truth, const StateDensity& estimate);

/// KLD integrand restricted to [lower, upper] (same rule and floor); points
/// where the estimate vanishes are skipped instead of diverging.
double kld_within(const StateDensity& truth, const StateDensity& estimate, double lower, double upper);

}  // namespace splinehmm

#endif  // SPLINEHMM_DENSITIES_HPP
