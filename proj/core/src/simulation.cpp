#include "splinehmm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splinehmm/inference.hpp"
#include "splinehmm/parallel.hpp"

namespace splinehmm {
namespace {

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double average(const std::vector<double>& v) {
  if (v.empty()) return kMissing;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ModelStructure structure_for(Competitor c, const SimScenario& scenario, std::shared_ptr<const SplineBasis> basis) {
  const std::size_t n = scenario.truth.states();
  switch (c) {
    case Competitor::Nonparametric:
      return ModelStructure::splines(n, std::move(basis));
    case Competitor::CorrectParametric:
      return ModelStructure{scenario.correct_families, nullptr};
    case Competitor::WrongParametric:
      return ModelStructure::uniform(n, EmissionFamily::Normal);
  }
  throw ConfigError("unknown competitor");
}

// Best mean score over the diagonal (v, ..., v) for N spline states.
double diagonal_score(const std::vector<double>& x, const std::vector<Partition>& partitions, FitConfig config,
                      const std::vector<double>& values) {
  CvFitScorer scorer(x, partitions, std::move(config));
  const BatchScorer batch = scorer.as_batch_scorer();
  return diagonal_scan(scorer.base().structure.states(), values, partitions.size(), batch).selected_score;
}

}  // namespace

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform_open(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the total: take the last index with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  throw ConfigError("sample_index: probabilities are all zero");
}

SimulatedSeries simulate_series(const HmmModel& model, std::size_t length, Rng& rng) {
  model.validate();
  const std::size_t n = model.states();
  SimulatedSeries out;
  out.observations.resize(length);
  out.states.resize(length);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) row[i] = model.delta(static_cast<Eigen::Index>(i));
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) {
      const auto prev = static_cast<Eigen::Index>(out.states[t - 1]);
      for (std::size_t j = 0; j < n; ++j) row[j] = model.gamma(prev, static_cast<Eigen::Index>(j));
    }
    const std::size_t s = sample_index(row, rng);
    out.states[t] = static_cast<int>(s);
    out.observations[t] = sample(model.emissions[s], rng);
  }
  return out;
}

SplineDensity spline_like(std::shared_ptr<const SplineBasis> basis, const std::function<double(double)>& target) {
  std::vector<double> a(basis->size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::max(target(basis->center(k)), 0.0);
  const double top = *std::max_element(a.begin(), a.end());
  if (!(top > 0.0)) throw ConfigError("spline_like: target vanishes at every basis centre");
  double total = 0.0;
  for (auto& v : a) {
    v = std::max(v, 1e-10 * top);
    total += v;
  }
  for (auto& v : a) v /= total;
  return SplineDensity::from_weights(std::move(basis), a);
}

std::string to_string(Competitor c) {
  switch (c) {
    case Competitor::Nonparametric:
      return "nonparametric";
    case Competitor::CorrectParametric:
      return "correct_parametric";
    case Competitor::WrongParametric:
      return "wrong_parametric";
  }
  return "unknown";
}

Competitor parse_competitor(const std::string& name) {
  if (name == "nonparametric") return Competitor::Nonparametric;
  if (name == "correct_parametric") return Competitor::CorrectParametric;
  if (name == "wrong_parametric") return Competitor::WrongParametric;
  throw ConfigError("unknown competitor '" + name + "'");
}

void SimScenario::validate() const {
  truth.validate();
  if (runs < 1) throw ConfigError("scenario: runs must be >= 1");
  if (length < 2) throw ConfigError("scenario: length must be >= 2");
  if (half_width < 2) throw ConfigError("scenario: K must be >= 2");
  if (partitions < 1) throw ConfigError("scenario: partitions must be >= 1");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw ConfigError("scenario: calibration fraction must lie in (0, 1)");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("scenario: level must lie in (0, 1)");
  if (restarts < 1) throw ConfigError("scenario: restarts must be >= 1");
  if (parametric_restarts < 1) throw ConfigError("scenario: parametric_restarts must be >= 1");
  if (search.values.empty()) throw ConfigError("scenario: lambda candidates are empty");
  if (competitors.empty()) throw ConfigError("scenario: no competitors");
  if (correct_families.size() != truth.states())
    throw ConfigError("scenario: correct_families must have one entry per state");
  for (std::size_t n : state_candidates)
    if (n < 1) throw ConfigError("scenario: state candidates must be >= 1");
}

SimScenario default_scenario() {
  Matrix gamma(2, 2);
  gamma << 0.9, 0.1, 0.1, 0.9;
  SimScenario s;
  s.truth = make_stationary_model(gamma, {NormalDensity{0.0, 1.5}, NormalMixtureDensity{3.0, 1.0, -5.0, 1.0, 0.85}});
  return s;
}

RunRecord run_once(const SimScenario& scenario, std::size_t run) {
  RunRecord rec;
  rec.run = run;
  rec.seed = derive_seed(scenario.seed, run);
  Rng rng(rec.seed);
  const SimulatedSeries sim = simulate_series(scenario.truth, scenario.length, rng);
  const std::vector<double>& x = sim.observations;
  const auto basis = std::make_shared<const SplineBasis>(basis_for_series(x, scenario.half_width));
  const std::vector<Partition> partitions =
      make_partitions(x.size(), scenario.partitions, scenario.calibration_fraction, derive_seed(rec.seed, 1));
  const std::size_t n = scenario.truth.states();

  auto base_config = [&](ModelStructure structure, std::uint64_t stream) {
    FitConfig cfg;
    cfg.structure = std::move(structure);
    cfg.penalty.lambda.assign(cfg.structure.states(), 0.0);
    cfg.restarts = scenario.restarts;
    cfg.seed = derive_seed(rec.seed, stream);
    cfg.optimizer = scenario.optimizer;
    return cfg;
  };

  std::optional<double> np_diagonal;
  const std::vector<double>& diag_values = scenario.search.diagonal.empty() ? scenario.search.values
                                                                             : scenario.search.diagonal;

  for (std::size_t c = 0; c < scenario.competitors.size(); ++c) {
    const Competitor comp = scenario.competitors[c];
    CompetitorRun cr;
    try {
      FitConfig cfg = base_config(structure_for(comp, scenario, basis), 10 + static_cast<std::uint64_t>(comp));
      if (comp != Competitor::Nonparametric) cfg.restarts = scenario.parametric_restarts;
      if (comp == Competitor::Nonparametric) {
        CvFitScorer scorer(x, partitions, cfg);
        const LambdaSelection sel = select_lambda(scorer, n, scenario.search);
        if (!sel.diagonal.trajectory.empty()) np_diagonal = sel.diagonal.selected_score;
        cfg.penalty.lambda = sel.lambda;
      }
      cr.lambda = cfg.penalty.lambda;
      const FitResult fitted = fit(x, cfg);
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        cr.gamma_diag.push_back(fitted.model.gamma(k, k));
        cr.kld.push_back(kld_within(scenario.truth.emissions[i], fitted.model.emissions[i], basis->support_lower(),
                                    basis->support_upper()));
      }
      cr.ok = true;

      if (scenario.bootstrap > 0) {
        FitConfig bcfg = cfg;
        bcfg.restarts = 0;
        const BootstrapEnsemble ens = bootstrap(fitted.model, x.size(), scenario.bootstrap, bcfg,
                                                derive_seed(rec.seed, 20 + static_cast<std::uint64_t>(comp)));
        cr.bootstrap_failures = ens.failed_count();
        const TpmIntervals ci = tpm_intervals(ens, scenario.level);
        for (std::size_t i = 0; i < n; ++i) {
          const auto k = static_cast<Eigen::Index>(i);
          std::vector<double> g;
          for (std::size_t r = 0; r < ens.replicates.size(); ++r)
            if (ens.converged[r]) g.push_back(ens.replicates[r].gamma(k, k));
          cr.bootstrap_se.push_back(sample_sd(g));
          const double truth = scenario.truth.gamma(k, k);
          cr.covered.push_back(truth >= ci.lower(k, k) && truth <= ci.upper(k, k) ? 1 : 0);
        }
      }
    } catch (const NumericalError& e) {
      cr.error = e.what();
    }
    rec.competitors[comp] = std::move(cr);
  }

  if (!scenario.state_candidates.empty()) {
    try {
      std::optional<std::size_t> best;
      for (std::size_t k = 0; k < scenario.state_candidates.size(); ++k) {
        const std::size_t states = scenario.state_candidates[k];
        double score = 0.0;
        if (states == n && np_diagonal) {
          score = *np_diagonal;
        } else {
          FitConfig cfg = base_config(ModelStructure::splines(states, basis), 100 + states);
          score = diagonal_score(x, partitions, cfg, diag_values);
        }
        rec.state_scores[states] = score;
        if (!best || score > rec.state_scores[scenario.state_candidates[*best]]) best = k;
      }
      rec.selected_states = scenario.state_candidates[*best];
    } catch (const NumericalError&) {
      rec.selected_states = 0;
    }
  }
  return rec;
}

SimReport summarize(const SimScenario& scenario, std::vector<RunRecord> records) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) { return a.run < b.run; });
  const std::size_t n = scenario.truth.states();
  SimReport report;
  report.runs = records.size();
  report.seed = scenario.seed;
  for (std::size_t i = 0; i < n; ++i)
    report.truth_gamma_diag.push_back(scenario.truth.gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));

  for (Competitor comp : scenario.competitors) {
    CompetitorSummary sum;
    std::vector<std::vector<double>> gamma(n), se(n), cov(n), kl(n);
    for (const auto& rec : records) {
      const auto it = rec.competitors.find(comp);
      if (it == rec.competitors.end()) continue;
      const CompetitorRun& cr = it->second;
      if (!cr.ok) {
        ++sum.failed;
        continue;
      }
      ++sum.runs;
      for (std::size_t i = 0; i < n; ++i) {
        gamma[i].push_back(cr.gamma_diag[i]);
        kl[i].push_back(cr.kld[i]);
        if (cr.bootstrap_se.size() == n) {
          se[i].push_back(cr.bootstrap_se[i]);
          cov[i].push_back(cr.covered[i]);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      sum.gamma_mean.push_back(average(gamma[i]));
      sum.gamma_sd.push_back(sample_sd(gamma[i]));
      sum.bootstrap_se_mean.push_back(average(se[i]));
      sum.coverage.push_back(average(cov[i]));
      sum.kld_mean.push_back(average(kl[i]));
    }
    report.competitors[comp] = std::move(sum);
  }

  for (std::size_t c : scenario.state_candidates) report.state_frequencies[c] = 0.0;
  for (const auto& rec : records)
    if (rec.selected_states > 0) ++report.state_selection_runs;
  if (report.state_selection_runs > 0) {
    std::map<std::size_t, std::size_t> counts;
    for (const auto& rec : records)
      if (rec.selected_states > 0) ++counts[rec.selected_states];
    for (const auto& [states, count] : counts)
      report.state_frequencies[states] =
          static_cast<double>(count) / static_cast<double>(report.state_selection_runs);
  }
  report.records = std::move(records);
  return report;
}

SimReport run_study(const SimScenario& scenario) {
  scenario.validate();
  std::vector<RunRecord> records(scenario.runs);
  parallel_for(scenario.runs, scenario.threads, [&](std::size_t r) { records[r] = run_once(scenario, r); });
  return summarize(scenario, std::move(records));
}

}  // namespace splinehmm
