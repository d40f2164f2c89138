#include "splinehmm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splinehmm/parallel.hpp"

namespace splinehmm {
namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double clamp_log(double p) { return std::log(std::max(p, 1e-300)); }

std::size_t family_size(EmissionFamily family, const SplineBasis* basis) {
  switch (family) {
    case EmissionFamily::Spline: return basis->size() - 1;
    case EmissionFamily::Normal: return 2;
    case EmissionFamily::NormalMixture: return 5;
  }
  return 0;
}

// Whittaker-type smoothing of a weight vector: argmin c |a - w|^2 + lambda |D^m a|^2.
// The sum of the weights is preserved; the result is floored to stay positive.
std::vector<double> smooth_weights(const std::vector<double>& w, double lambda, int order, double c) {
  if (!(lambda > 0.0)) return w;
  const auto n = static_cast<Eigen::Index>(w.size());
  Matrix d = Matrix::Identity(n, n);
  for (int r = 0; r < order; ++r) {
    const Eigen::Index rows = d.rows() - 1;
    d = (d.bottomRows(rows) - d.topRows(rows)).eval();
  }
  Matrix system = c * Matrix::Identity(n, n) + lambda * d.transpose() * d;
  const Vector rhs = c * Eigen::Map<const Vector>(w.data(), n);
  const Vector a = system.ldlt().solve(rhs);
  std::vector<double> out(w.size());
  const double top = a.maxCoeff();
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] = std::max(a(k), 1e-6 * top);
    total += out[static_cast<std::size_t>(k)];
  }
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace

std::string to_string(EmissionFamily family) {
  switch (family) {
    case EmissionFamily::Spline: return "spline";
    case EmissionFamily::Normal: return "normal";
    case EmissionFamily::NormalMixture: return "normal_mixture";
  }
  return "unknown";
}

EmissionFamily parse_family(const std::string& name) {
  if (name == "spline") return EmissionFamily::Spline;
  if (name == "normal") return EmissionFamily::Normal;
  if (name == "normal_mixture") return EmissionFamily::NormalMixture;
  throw ConfigError("unknown emission family '" + name + "'");
}

EmissionFamily family_of(const StateDensity& d) {
  if (std::holds_alternative<SplineDensity>(d)) return EmissionFamily::Spline;
  if (std::holds_alternative<NormalDensity>(d)) return EmissionFamily::Normal;
  return EmissionFamily::NormalMixture;
}

double difference_penalty(std::span<const double> weights, int order) {
  std::vector<double> d(weights.begin(), weights.end());
  for (int r = 0; r < order && !d.empty(); ++r) {
    for (std::size_t k = 0; k + 1 < d.size(); ++k) d[k] = d[k + 1] - d[k];
    d.pop_back();
  }
  double s = 0.0;
  for (double v : d) s += v * v;
  return s;
}

double penalty(const std::vector<std::vector<double>>& weights, const PenaltySpec& spec) {
  if (weights.size() != spec.lambda.size())
    throw ConfigError("penalty: one smoothing parameter per state is required");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].empty() || spec.lambda[i] == 0.0) continue;
    total += 0.5 * spec.lambda[i] * difference_penalty(weights[i], spec.order);
  }
  return total;
}

bool ModelStructure::has_spline() const {
  return std::any_of(families.begin(), families.end(),
                     [](EmissionFamily f) { return f == EmissionFamily::Spline; });
}

ModelStructure ModelStructure::splines(std::size_t states, std::shared_ptr<const SplineBasis> basis) {
  return ModelStructure{std::vector<EmissionFamily>(states, EmissionFamily::Spline), std::move(basis)};
}

ModelStructure ModelStructure::uniform(std::size_t states, EmissionFamily family) {
  return ModelStructure{std::vector<EmissionFamily>(states, family), nullptr};
}

ParameterLayout::ParameterLayout(ModelStructure structure) : structure_(std::move(structure)) {
  const std::size_t n = structure_.states();
  if (n == 0) throw ConfigError("model structure needs at least one state");
  if (structure_.has_spline() && !structure_.basis)
    throw ConfigError("spline emissions require a basis");
  size_ = n * (n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    offsets_.push_back(size_);
    size_ += family_size(structure_.families[i], structure_.basis.get());
  }
}

std::size_t ParameterLayout::emission_size(std::size_t state) const {
  return family_size(structure_.families[state], structure_.basis.get());
}

Matrix ParameterLayout::transition_matrix(std::span<const double> theta) const {
  const auto n = static_cast<Eigen::Index>(states());
  Matrix gamma(n, n);
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = 0.0;
    for (Eigen::Index j = 0, p = static_cast<Eigen::Index>(pos); j < n; ++j)
      if (j != i) top = std::max(top, theta[static_cast<std::size_t>(p++)]);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double eta = (j == i) ? 0.0 : theta[pos++];
      gamma(i, j) = std::exp(eta - top);
      total += gamma(i, j);
    }
    gamma.row(i) /= total;
  }
  return gamma;
}

HmmModel ParameterLayout::unpack(std::span<const double> theta) const {
  if (theta.size() != size_) throw ConfigError("working vector has the wrong length");
  std::vector<StateDensity> emissions;
  for (std::size_t i = 0; i < states(); ++i) {
    const double* p = theta.data() + offsets_[i];
    switch (structure_.families[i]) {
      case EmissionFamily::Spline:
        emissions.emplace_back(SplineDensity(structure_.basis, std::span<const double>(p, emission_size(i))));
        break;
      case EmissionFamily::Normal:
        emissions.emplace_back(NormalDensity{p[0], std::exp(p[1])});
        break;
      case EmissionFamily::NormalMixture:
        emissions.emplace_back(NormalMixtureDensity{p[0], std::exp(p[1]), p[2], std::exp(p[3]), logistic(p[4])});
        break;
    }
  }
  return make_stationary_model(transition_matrix(theta), std::move(emissions));
}

std::vector<double> ParameterLayout::pack(const HmmModel& model) const {
  if (model.states() != states()) throw ConfigError("model state count does not match the layout");
  std::vector<double> theta;
  theta.reserve(size_);
  const auto n = static_cast<Eigen::Index>(states());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) theta.push_back(clamp_log(model.gamma(i, j)) - clamp_log(model.gamma(i, i)));
  for (std::size_t i = 0; i < states(); ++i) {
    const auto& e = model.emissions[i];
    if (family_of(e) != structure_.families[i])
      throw ConfigError("model family of state " + std::to_string(i + 1) + " does not match the layout");
    if (const auto* s = std::get_if<SplineDensity>(&e)) {
      if (!(s->basis() == *structure_.basis)) throw ConfigError("spline basis does not match the layout");
      theta.insert(theta.end(), s->free_logits().begin(), s->free_logits().end());
    } else if (const auto* nd = std::get_if<NormalDensity>(&e)) {
      theta.push_back(nd->mean);
      theta.push_back(std::log(nd->sd));
    } else {
      const auto& m = std::get<NormalMixtureDensity>(e);
      const double w = std::clamp(m.weight, 1e-12, 1.0 - 1e-12);
      theta.insert(theta.end(), {m.mean1, std::log(m.sd1), m.mean2, std::log(m.sd2), std::log(w / (1.0 - w))});
    }
  }
  return theta;
}

std::vector<std::vector<double>> ParameterLayout::spline_weights(const HmmModel& model) const {
  std::vector<std::vector<double>> out(model.states());
  for (std::size_t i = 0; i < model.states(); ++i)
    if (const auto* s = std::get_if<SplineDensity>(&model.emissions[i]))
      out[i].assign(s->weights().begin(), s->weights().end());
  return out;
}

void validate_penalty(const PenaltySpec& spec, const ModelStructure& structure) {
  if (spec.lambda.size() != structure.states())
    throw ConfigError("expected " + std::to_string(structure.states()) + " smoothing parameters, got " +
                      std::to_string(spec.lambda.size()));
  for (double l : spec.lambda)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("smoothing parameters must be finite and >= 0");
  if (spec.order < 1) throw ConfigError("penalty order must be >= 1");
  if (structure.has_spline() && static_cast<std::size_t>(spec.order) >= structure.basis->size())
    throw ConfigError("penalty order must be smaller than the number of basis elements");
}

double penalized_loglik(const ParameterLayout& layout, std::span<const double> theta, Series series,
                        const PenaltySpec& spec) {
  validate_penalty(spec, layout.structure());
  const HmmModel model = layout.unpack(theta);
  const ForwardPass fp = forecast_state_probs(model, series);
  return fp.log_likelihood - penalty(layout.spline_weights(model), spec);
}

void validate_fit_config(const FitConfig& config, Series series) {
  const std::size_t n = config.structure.states();
  if (n == 0) throw ConfigError("fit: number of states must be >= 1");
  if (config.restarts < 0) throw ConfigError("fit: restarts must be >= 0");
  if (config.restarts == 0 && config.warm_starts.empty())
    throw ConfigError("fit: restarts must be >= 1 when no warm start is given");
  validate_penalty(config.penalty, config.structure);
  if (series.size() < n) throw ConfigError("fit: series is shorter than the number of states");
  for (double x : series)
    if (!is_missing(x) && !std::isfinite(x)) throw ConfigError("fit: series contains a non-finite value");
  if (observed_count(series) < 2) throw ConfigError("fit: at least two observed values are required");
}

std::vector<std::vector<double>> initial_points(const FitConfig& config, Series series, Rng& rng) {
  const ParameterLayout layout(config.structure);
  const std::size_t n = layout.states();

  std::vector<double> observed;
  for (double x : series)
    if (!is_missing(x)) observed.push_back(x);
  if (observed.size() < 2) throw ConfigError("initial_points: at least two observed values are required");
  std::sort(observed.begin(), observed.end());
  const double mu = std::accumulate(observed.begin(), observed.end(), 0.0) / static_cast<double>(observed.size());
  double ss = 0.0;
  for (double x : observed) ss += (x - mu) * (x - mu);
  const double sd = std::max(std::sqrt(ss / static_cast<double>(observed.size() - 1)), 1e-8);
  auto quantile = [&](double p) {
    const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(observed.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, observed.size() - 1);
    return observed[lo] + (pos - static_cast<double>(lo)) * (observed[hi] - observed[lo]);
  };
  auto uniform = [&](double a, double b) { return a + (b - a) * uniform_open(rng); };

  // Kernel estimate of the marginal at the basis positions; blended into every
  // spline start so no state begins without mass where data lie.
  std::vector<double> marginal;
  if (config.structure.has_spline()) {
    const SplineBasis& basis = *config.structure.basis;
    marginal.assign(basis.size(), 0.0);
    double total = 0.0;
    for (double x : observed) {
      const auto local = basis.local(x);
      for (std::size_t r = 0; r < local.count; ++r) marginal[local.first + r] += local.values[r];
    }
    for (double v : marginal) total += v;
    for (auto& v : marginal) v /= total;
  }

  std::vector<std::vector<double>> points;
  for (int r = 0; r < config.restarts; ++r) {
    std::vector<double> theta(layout.size(), 0.0);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double persistence = uniform(0.6, 0.98);
      const double off = (1.0 - persistence) / static_cast<double>(n - 1);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) theta[pos++] = std::log(off / persistence) + 0.1 * standard_normal(rng);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* p = theta.data() + layout.emission_offset(i);
      // Each state starts in its own stratum of the data.
      const double location = quantile((static_cast<double>(i) + uniform(0.2, 0.8)) / static_cast<double>(n));
      switch (config.structure.families[i]) {
        case EmissionFamily::Spline: {
          const SplineBasis& basis = *config.structure.basis;
          const double width = sd * uniform(0.3, 0.8);
          std::vector<double> beta(basis.size());
          double top = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < basis.size(); ++j) {
            const double z = (basis.center(j) - location) / width;
            beta[j] = -0.5 * z * z + 0.1 * standard_normal(rng);
            top = std::max(top, beta[j]);
          }
          const std::size_t center = static_cast<std::size_t>(basis.half_width());
          std::vector<double> a(basis.size());
          double total = 0.0;
          for (std::size_t j = 0; j < basis.size(); ++j) {
            a[j] = std::exp(std::max(beta[j], top - 8.0) - top);
            total += a[j];
          }
          const double share = uniform(0.2, 0.5);
          for (std::size_t j = 0; j < a.size(); ++j) a[j] = (1.0 - share) * a[j] / total + share * marginal[j];
          // Start from the tilt smoothed by this state's own penalty, so large
          // smoothing parameters begin near the penalty's null space.
          const double lambda = i < config.penalty.lambda.size() ? config.penalty.lambda[i] : 0.0;
          a = smooth_weights(a, lambda, config.penalty.order,
                             static_cast<double>(observed.size()) * static_cast<double>(basis.size()));
          for (std::size_t j = 0, f = 0; j < basis.size(); ++j)
            if (j != center) p[f++] = std::log(a[j] / a[center]);
          break;
        }
        case EmissionFamily::Normal:
          p[0] = location;
          p[1] = std::log(sd * uniform(0.3, 0.8));
          break;
        case EmissionFamily::NormalMixture:
          p[0] = location;
          p[1] = std::log(sd * uniform(0.2, 0.6));
          p[2] = quantile(uniform(0.0, 1.0));
          p[3] = std::log(sd * uniform(0.3, 1.0));
          p[4] = 1.5 + 0.5 * standard_normal(rng);
          break;
      }
    }
    points.push_back(std::move(theta));
  }
  return points;
}

FitResult fit(Series series, const FitConfig& config) {
  validate_fit_config(config, series);
  const ParameterLayout layout(config.structure);
  for (const auto& w : config.warm_starts)
    if (w.size() != layout.size()) throw ConfigError("fit: warm start has the wrong length");

  Rng rng(config.seed);
  std::vector<std::vector<double>> starts = initial_points(config, series, rng);
  const std::size_t random_count = starts.size();
  starts.insert(starts.end(), config.warm_starts.begin(), config.warm_starts.end());

  const PenalizedObjective objective(layout, series, config.penalty, config.gradient);
  const Objective fn = [&objective](std::span<const double> x, std::span<double> g) { return objective(x, g); };

  std::vector<OptimizerResult> results(starts.size());
  parallel_for(starts.size(), config.threads, [&](std::size_t r) {
    results[r] = minimize(fn, starts[r], config.optimizer);
  });

  FitResult out;
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < results.size(); ++r) {
    RestartDiagnostics d;
    d.index = r;
    d.warm = r >= random_count;
    d.penalized_loglik = -results[r].value;
    d.iterations = results[r].iterations;
    d.status = results[r].status;
    d.converged = results[r].converged() && std::isfinite(results[r].value);
    out.restarts.push_back(d);
    if (d.converged && (!best || results[r].value < results[*best].value)) best = r;
  }
  if (!best) throw FitError("fit: none of the " + std::to_string(results.size()) + " restarts converged", out.restarts);

  HmmModel model = layout.unpack(results[*best].x);
  const bool same_family = std::all_of(config.structure.families.begin(), config.structure.families.end(),
                                       [&](EmissionFamily f) { return f == config.structure.families.front(); });
  if (same_family) model = sort_states_by_mean(model);

  out.working = layout.pack(model);
  out.model = std::move(model);
  out.loglik = log_likelihood(out.model, series);
  out.penalized_loglik = out.loglik - penalty(layout.spline_weights(out.model), config.penalty);
  out.lambda = config.penalty.lambda;
  out.iterations = results[*best].iterations;
  out.best_restart = *best;
  out.converged = true;

  const ViterbiPath path = viterbi(out.model, series);
  std::vector<char> visited(out.model.states(), 0);
  for (std::size_t t = 0; t < series.size(); ++t)
    if (!is_missing(series[t])) visited[static_cast<std::size_t>(path.states[t])] = 1;
  out.degenerate_state = std::any_of(visited.begin(), visited.end(), [](char v) { return v == 0; });
  return out;
}

std::size_t parameter_count(const ModelStructure& structure) {
  const ParameterLayout layout(structure);
  return layout.size();
}

InformationCriteria information_criteria(double loglik, std::size_t parameters, std::size_t observations) {
  if (observations == 0) throw ConfigError("information criteria need at least one observation");
  InformationCriteria ic;
  ic.loglik = loglik;
  ic.parameters = parameters;
  ic.observations = observations;
  const double p = static_cast<double>(parameters);
  ic.aic = -2.0 * loglik + 2.0 * p;
  ic.bic = -2.0 * loglik + p * std::log(static_cast<double>(observations));
  return ic;
}

std::size_t observed_count(Series series) {
  return static_cast<std::size_t>(std::count_if(series.begin(), series.end(), [](double x) { return !is_missing(x); }));
}

}  // namespace splinehmm
