#ifndef SPLINEHMM_ESTIMATION_HPP
#define SPLINEHMM_ESTIMATION_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splinehmm/common.hpp"
#include "splinehmm/hmm.hpp"
#include "splinehmm/optimizer.hpp"
#include "splinehmm/spline_basis.hpp"

namespace splinehmm {

enum class EmissionFamily { Spline, Normal, NormalMixture };

std::string to_string(EmissionFamily family);
EmissionFamily parse_family(const std::string& name);
EmissionFamily family_of(const StateDensity& d);

/// Difference order m and per-state smoothing parameters lambda_i >= 0.
struct PenaltySpec {
  int order = 2;
  std::vector<double> lambda;
};

/// Sum of squared m-th order differences of consecutive weights.
double difference_penalty(std::span<const double> weights, int order);

/// sum_i lambda_i / 2 * sum_k (Delta^m a_{i,k})^2 over the given weight vectors.
double penalty(const std::vector<std::vector<double>>& weights, const PenaltySpec& spec);

/// Families to fit, one per state, and the shared spline basis (required
/// when any family is Spline).
struct ModelStructure {
  std::vector<EmissionFamily> families;
  std::shared_ptr<const SplineBasis> basis;

  std::size_t states() const { return families.size(); }
  bool has_spline() const;

  static ModelStructure splines(std::size_t states, std::shared_ptr<const SplineBasis> basis);
  static ModelStructure uniform(std::size_t states, EmissionFamily family);
};

/// Maps an unconstrained working vector to a stationary HmmModel.
///
/// Layout: N(N-1) transition logits (row-wise, diagonal is the reference
/// category), then per state either 2K spline logits (beta_0 pinned at 0),
/// (mu, log sigma) for a normal, or (mu1, log sigma1, mu2, log sigma2,
/// logit w) for a two-component normal mixture.
class ParameterLayout {
 public:
  explicit ParameterLayout(ModelStructure structure);

  const ModelStructure& structure() const { return structure_; }
  std::size_t size() const { return size_; }
  std::size_t states() const { return structure_.states(); }
  std::size_t emission_offset(std::size_t state) const { return offsets_[state]; }
  std::size_t emission_size(std::size_t state) const;

  Matrix transition_matrix(std::span<const double> theta) const;
  HmmModel unpack(std::span<const double> theta) const;
  /// Inverse of unpack; zero probabilities are clamped to 1e-300.
  std::vector<double> pack(const HmmModel& model) const;

  /// Spline weights of every spline state (empty vectors for other families).
  std::vector<std::vector<double>> spline_weights(const HmmModel& model) const;

 private:
  ModelStructure structure_;
  std::vector<std::size_t> offsets_;
  std::size_t size_ = 0;
};

/// Checks lambda size, non-negativity and 1 <= m < 2K+1.
void validate_penalty(const PenaltySpec& spec, const ModelStructure& structure);

/// log L(theta) - penalty, evaluated directly through hmm_core.
double penalized_loglik(const ParameterLayout& layout, std::span<const double> theta,
                        Series series, const PenaltySpec& spec);

enum class GradientMethod { Analytic, CentralDifference };

/// Negative penalized log-likelihood with its gradient, for minimization.
///
/// The analytic gradient runs a scaled forward-backward pass and propagates
/// through the softmax, stationary-distribution and parametric transforms.
/// Spline basis values at the observations are cached at construction.
class PenalizedObjective {
 public:
  PenalizedObjective(const ParameterLayout& layout, Series series, PenaltySpec spec,
                     GradientMethod method = GradientMethod::Analytic);

  /// Returns -l_p(theta); fills grad when non-empty; +infinity on zero likelihood.
  double operator()(std::span<const double> theta, std::span<double> grad) const;

  double value(std::span<const double> theta) const;
  std::vector<double> analytic_gradient(std::span<const double> theta) const;

  const ParameterLayout& layout() const { return layout_; }

 private:
  double evaluate(std::span<const double> theta, std::span<double> grad) const;

  const ParameterLayout& layout_;
  std::vector<double> series_;
  PenaltySpec spec_;
  GradientMethod method_;
  std::vector<SplineBasis::LocalValues> local_;
};

struct FitConfig {
  ModelStructure structure;
  PenaltySpec penalty;
  /// Number of random starting points (may be 0 when warm starts are given).
  int restarts = 5;
  std::uint64_t seed = 1;
  OptimizerOptions optimizer;
  GradientMethod gradient = GradientMethod::Analytic;
  /// Workers for running restarts in parallel.
  unsigned threads = 1;
  /// Extra starting points (working vectors), tried in addition to the random ones.
  std::vector<std::vector<double>> warm_starts;
};

struct RestartDiagnostics {
  std::size_t index = 0;
  bool warm = false;
  double penalized_loglik = 0.0;
  int iterations = 0;
  OptimizerStatus status = OptimizerStatus::IterationLimit;
  bool converged = false;
};

struct FitResult {
  /// States sorted by ascending emission mean.
  HmmModel model;
  /// Working vector of `model` (after sorting).
  std::vector<double> working;
  double penalized_loglik = 0.0;
  double loglik = 0.0;
  std::vector<double> lambda;
  int iterations = 0;
  std::size_t best_restart = 0;
  bool converged = false;
  /// Some state is never visited by the Viterbi path of the fitting series.
  bool degenerate_state = false;
  std::vector<RestartDiagnostics> restarts;
};

/// Thrown when no restart converges; carries per-restart diagnostics.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, std::vector<RestartDiagnostics> diagnostics)
      : NumericalError(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<RestartDiagnostics>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<RestartDiagnostics> diagnostics_;
};

void validate_fit_config(const FitConfig& config, Series series);

/// `restarts` random working vectors for the given series.
std::vector<std::vector<double>> initial_points(const FitConfig& config, Series series, Rng& rng);

/// Maximizes the penalized log-likelihood from every starting point and keeps
/// the best converged optimum (ties by restart index). Deterministic given
/// config.seed, independent of config.threads.
FitResult fit(Series series, const FitConfig& config);

/// Number of free parameters of a (stationary) model with this structure.
std::size_t parameter_count(const ModelStructure& structure);

struct InformationCriteria {
  double loglik = 0.0;
  std::size_t parameters = 0;
  std::size_t observations = 0;
  double aic = 0.0;
  double bic = 0.0;
};

/// AIC = -2 log L + 2p, BIC = -2 log L + p log T (T = observed values).
InformationCriteria information_criteria(double loglik, std::size_t parameters, std::size_t observations);

std::size_t observed_count(Series series);

}  // namespace splinehmm

#endif  // SPLINEHMM_ESTIMATION_HPP
