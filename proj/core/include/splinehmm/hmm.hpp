#ifndef SPLINEHMM_HMM_HPP
#define SPLINEHMM_HMM_HPP

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "splinehmm/common.hpp"
#include "splinehmm/densities.hpp"

namespace splinehmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Throws ConfigError unless gamma is square with rows on the simplex (1e-12).
void validate_transition_matrix(const Matrix& gamma);

/// Throws ConfigError unless delta is a probability vector (1e-12).
void validate_distribution(const Vector& delta);

/// N-state HMM: transition matrix, initial distribution and one emission
/// density per state. With `stationary` set, delta is the stationary
/// distribution of gamma.
struct HmmModel {
  Matrix gamma;
  Vector delta;
  std::vector<StateDensity> emissions;
  bool stationary = true;

  std::size_t states() const { return emissions.size(); }
  void validate() const;
};

/// Stationary model: delta is derived from gamma.
HmmModel make_stationary_model(Matrix gamma, std::vector<StateDensity> emissions);

/// Solves delta * gamma = delta with sum(delta) = 1. Throws NumericalError if
/// the chain is not irreducible.
Vector stationary_distribution(const Matrix& gamma);

/// Emission densities f_i(x_t), row-major T x N; missing rows are all ones.
std::vector<double> emission_matrix(const HmmModel& model, Series series);

/// Scaled forward recursion.
struct ForwardPass {
  std::size_t states = 0;
  double log_likelihood = 0.0;
  /// zeta_t: one-step predictive state probabilities, row-major T x N;
  /// row 0 equals delta.
  std::vector<double> predictive;
  /// Normalized forward vectors alpha_t / (alpha_t 1), row-major T x N.
  std::vector<double> filtered;
  /// log of the per-step scale c_t = alpha_t 1 / alpha_{t-1} 1.
  std::vector<double> log_scale;
};

/// Never throws on a zero likelihood; log_likelihood is then -infinity and
/// the arrays stop at the failing step.
ForwardPass forecast_state_probs(const HmmModel& model, Series series);

/// log of delta Q(x_1) Gamma Q(x_2) ... Gamma Q(x_T) 1, with Q = I at missing
/// observations. Throws NumericalError when the likelihood is zero.
double log_likelihood(const HmmModel& model, Series series);

struct ViterbiPath {
  std::vector<int> states;  ///< zero-based state indices
  double log_probability = 0.0;  ///< joint log density of path and data
};

/// Most probable state path; ties go to the lower state index.
ViterbiPath viterbi(const HmmModel& model, Series series);

/// sum_i delta_i f_i(x) with delta the stationary distribution of gamma.
double marginal_density(const HmmModel& model, double x);

/// Model autocorrelation rho(0..max_lag) of the stationary process.
std::vector<double> model_acf(const HmmModel& model, int max_lag);

/// Sample autocorrelation rho(0..max_lag); missing values are skipped pairwise.
std::vector<double> sample_acf(Series series, int max_lag);

/// Reorders states; new state i is old state perm[i].
HmmModel permute_states(const HmmModel& model, const std::vector<std::size_t>& perm);

/// Reorders states by ascending emission mean (stable).
HmmModel sort_states_by_mean(const HmmModel& model);

}  // namespace splinehmm

#endif  // SPLINEHMM_HMM_HPP
