#ifndef SPLINEHMM_SIMULATION_HPP
#define SPLINEHMM_SIMULATION_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "splinehmm/common.hpp"
#include "splinehmm/estimation.hpp"
#include "splinehmm/hmm.hpp"
#include "splinehmm/model_selection.hpp"

namespace splinehmm {

struct SimulatedSeries {
  std::vector<double> observations;
  std::vector<int> states;  ///< zero-based
};

/// S_1 ~ delta, S_t ~ row S_{t-1} of Gamma, X_t ~ emission of S_t.
SimulatedSeries simulate_series(const HmmModel& model, std::size_t length, Rng& rng);

/// Index drawn with the given (normalized) probabilities.
std::size_t sample_index(std::span<const double> probs, Rng& rng);

/// Spline density on `basis` with a_k proportional to target(center_k).
SplineDensity spline_like(std::shared_ptr<const SplineBasis> basis, const std::function<double(double)>& target);

enum class Competitor { Nonparametric, CorrectParametric, WrongParametric };
std::string to_string(Competitor c);
Competitor parse_competitor(const std::string& name);

struct SimScenario {
  HmmModel truth;
  std::size_t length = 800;
  std::size_t runs = 50;
  int half_width = 15;
  std::size_t partitions = 10;
  double calibration_fraction = 0.9;
  LambdaSearch search;
  std::size_t bootstrap = 100;  ///< 0 skips the bootstrap
  double level = 0.95;
  std::vector<Competitor> competitors = {Competitor::Nonparametric, Competitor::CorrectParametric,
                                         Competitor::WrongParametric};
  /// Families of the correctly specified parametric model.
  std::vector<EmissionFamily> correct_families = {EmissionFamily::Normal, EmissionFamily::NormalMixture};
  /// Empty skips state-count selection.
  std::vector<std::size_t> state_candidates = {1, 2, 3};
  int restarts = 3;
  /// Restarts for the parametric competitors.
  int parametric_restarts = 10;
  OptimizerOptions optimizer;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

/// Two states, Gamma = (0.9 0.1 / 0.1 0.9); state 1 ~ N(0, 1.5^2),
/// state 2 ~ 0.85 N(3, 1) + 0.15 N(-5, 1).
SimScenario default_scenario();

struct CompetitorRun {
  bool ok = false;
  std::vector<double> lambda;
  std::vector<double> gamma_diag;
  std::vector<double> bootstrap_se;   ///< per diagonal entry; empty without bootstrap
  std::vector<int> covered;           ///< truth inside the bootstrap interval
  std::vector<double> kld;            ///< per state, against the truth
  std::size_t bootstrap_failures = 0;
  std::string error;
};

struct RunRecord {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::map<Competitor, CompetitorRun> competitors;
  std::size_t selected_states = 0;  ///< 0 when not run or failed
  std::map<std::size_t, double> state_scores;
};

struct CompetitorSummary {
  std::size_t runs = 0;  ///< runs with a successful fit
  std::size_t failed = 0;
  std::vector<double> gamma_mean;
  std::vector<double> gamma_sd;
  std::vector<double> bootstrap_se_mean;
  std::vector<double> coverage;
  std::vector<double> kld_mean;
};

struct SimReport {
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  std::vector<double> truth_gamma_diag;
  std::map<Competitor, CompetitorSummary> competitors;
  std::map<std::size_t, double> state_frequencies;
  std::size_t state_selection_runs = 0;
  std::vector<RunRecord> records;  ///< ordered by run index
};

/// One replication: simulate, select lambda by CV, fit every competitor,
/// bootstrap it, score KLDs and select the number of states.
RunRecord run_once(const SimScenario& scenario, std::size_t run);

/// Aggregates run records (order-independent).
SimReport summarize(const SimScenario& scenario, std::vector<RunRecord> records);

/// All runs in parallel over scenario.threads workers.
SimReport run_study(const SimScenario& scenario);

}  // namespace splinehmm

#endif  // SPLINEHMM_SIMULATION_HPP
