#include "splinehmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace splinehmm {
namespace {

constexpr double kSimplexTolerance = 1e-12;

bool strongly_connected(const Matrix& gamma) {
  const Eigen::Index n = gamma.rows();
  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const Eigen::Index i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double p = transpose ? gamma(j, i) : gamma(i, j);
        if (p > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          stack.push_back(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reaches_all(false) && reaches_all(true);
}

}  // namespace

void validate_transition_matrix(const Matrix& gamma) {
  if (gamma.rows() == 0 || gamma.rows() != gamma.cols())
    throw ConfigError("transition matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    for (Eigen::Index j = 0; j < gamma.cols(); ++j)
      if (!(gamma(i, j) >= 0.0 && gamma(i, j) <= 1.0))
        throw ConfigError("transition probabilities must lie in [0, 1]");
    if (std::abs(gamma.row(i).sum() - 1.0) > kSimplexTolerance)
      throw ConfigError("transition matrix row " + std::to_string(i + 1) + " does not sum to 1");
  }
}

void validate_distribution(const Vector& delta) {
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    if (!(delta(i) >= 0.0)) throw ConfigError("initial distribution has a negative entry");
  if (std::abs(delta.sum() - 1.0) > kSimplexTolerance)
    throw ConfigError("initial distribution does not sum to 1");
}

void HmmModel::validate() const {
  const auto n = static_cast<Eigen::Index>(states());
  if (n == 0) throw ConfigError("model has no states");
  if (gamma.rows() != n) throw ConfigError("transition matrix size does not match state count");
  if (delta.size() != n) throw ConfigError("initial distribution size does not match state count");
  validate_transition_matrix(gamma);
  validate_distribution(delta);
  for (const auto& e : emissions) splinehmm::validate(e);
  if (stationary && n > 1) {
    const Vector residual = gamma.transpose() * delta - delta;
    if (residual.cwiseAbs().maxCoeff() > 1e-10)
      throw ConfigError("stationary model: delta is not stationary for gamma");
  }
}

HmmModel make_stationary_model(Matrix gamma, std::vector<StateDensity> emissions) {
  HmmModel m;
  m.delta = stationary_distribution(gamma);
  m.gamma = std::move(gamma);
  m.emissions = std::move(emissions);
  m.stationary = true;
  return m;
}

Vector stationary_distribution(const Matrix& gamma) {
  validate_transition_matrix(gamma);
  const Eigen::Index n = gamma.rows();
  if (n == 1) return Vector::Ones(1);
  if (!strongly_connected(gamma))
    throw NumericalError("transition matrix is reducible; no unique stationary distribution");
  // delta (I - Gamma + U) = 1'
  const Matrix a = Matrix::Identity(n, n) - gamma + Matrix::Ones(n, n);
  Vector delta = a.transpose().fullPivLu().solve(Vector::Ones(n));
  for (Eigen::Index i = 0; i < n; ++i) delta(i) = std::max(delta(i), 0.0);
  delta /= delta.sum();
  return delta;
}

std::vector<double> emission_matrix(const HmmModel& model, Series series) {
  const std::size_t n = model.states();
  std::vector<double> f(series.size() * n, 1.0);
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (is_missing(series[t])) continue;
    for (std::size_t i = 0; i < n; ++i) f[t * n + i] = pdf(model.emissions[i], series[t]);
  }
  return f;
}

ForwardPass forecast_state_probs(const HmmModel& model, Series series) {
  const std::size_t n = model.states();
  const std::size_t T = series.size();
  ForwardPass out;
  out.states = n;
  out.predictive.reserve(T * n);
  out.filtered.reserve(T * n);
  out.log_scale.reserve(T);

  const std::vector<double> f = emission_matrix(model, series);
  std::vector<double> pred(model.delta.data(), model.delta.data() + n);
  std::vector<double> filt(n);
  for (std::size_t t = 0; t < T; ++t) {
    out.predictive.insert(out.predictive.end(), pred.begin(), pred.end());
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      filt[i] = pred[i] * f[t * n + i];
      c += filt[i];
    }
    if (!(c > 0.0) || !std::isfinite(c)) {
      out.log_likelihood = -std::numeric_limits<double>::infinity();
      return out;
    }
    for (auto& v : filt) v /= c;
    out.filtered.insert(out.filtered.end(), filt.begin(), filt.end());
    out.log_scale.push_back(std::log(c));
    out.log_likelihood += out.log_scale.back();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += filt[i] * model.gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      pred[j] = s;
    }
  }
  return out;
}

double log_likelihood(const HmmModel& model, Series series) {
  const ForwardPass fp = forecast_state_probs(model, series);
  if (!std::isfinite(fp.log_likelihood))
    throw NumericalError("likelihood is zero: all emission densities vanish at observation " +
                         std::to_string(fp.log_scale.size() + 1));
  return fp.log_likelihood;
}

ViterbiPath viterbi(const HmmModel& model, Series series) {
  const std::size_t n = model.states();
  const std::size_t T = series.size();
  ViterbiPath out;
  if (T == 0) return out;

  const std::vector<double> f = emission_matrix(model, series);
  auto safe_log = [](double v) {
    return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
  };
  Matrix log_gamma(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < log_gamma.rows(); ++i)
    for (Eigen::Index j = 0; j < log_gamma.cols(); ++j) log_gamma(i, j) = safe_log(model.gamma(i, j));

  std::vector<double> score(n), next(n);
  std::vector<int> back(T * n, 0);
  for (std::size_t i = 0; i < n; ++i) score[i] = safe_log(model.delta(static_cast<Eigen::Index>(i))) + safe_log(f[i]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = score[i] + log_gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (s > best) {  // strict: earlier (lower) index wins ties
          best = s;
          arg = static_cast<int>(i);
        }
      }
      next[j] = best + safe_log(f[t * n + j]);
      back[t * n + j] = arg;
    }
    score.swap(next);
  }

  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (score[i] > best) {
      best = score[i];
      arg = static_cast<int>(i);
    }
  if (!std::isfinite(best)) throw NumericalError("no state path has positive probability");

  out.log_probability = best;
  out.states.assign(T, 0);
  out.states[T - 1] = arg;
  for (std::size_t t = T - 1; t > 0; --t) out.states[t - 1] = back[t * n + static_cast<std::size_t>(out.states[t])];
  return out;
}

double marginal_density(const HmmModel& model, double x) {
  const Vector delta = stationary_distribution(model.gamma);
  double v = 0.0;
  for (std::size_t i = 0; i < model.states(); ++i) v += delta(static_cast<Eigen::Index>(i)) * pdf(model.emissions[i], x);
  return v;
}

std::vector<double> model_acf(const HmmModel& model, int max_lag) {
  if (max_lag < 0) throw ConfigError("max_lag must be non-negative");
  const auto n = static_cast<Eigen::Index>(model.states());
  const Vector delta = stationary_distribution(model.gamma);
  Vector m(n), m2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i) = mean(model.emissions[static_cast<std::size_t>(i)]);
    m2(i) = second_moment(model.emissions[static_cast<std::size_t>(i)]);
  }
  const double mu = delta.dot(m);
  const double var = delta.dot(m2) - mu * mu;
  if (!(var > 0.0)) throw NumericalError("model marginal variance is zero");

  std::vector<double> rho(static_cast<std::size_t>(max_lag) + 1);
  rho[0] = 1.0;
  const Vector weighted = delta.cwiseProduct(m);
  Vector propagated = m;  // Gamma^k m
  for (int k = 1; k <= max_lag; ++k) {
    propagated = model.gamma * propagated;
    rho[static_cast<std::size_t>(k)] = (weighted.dot(propagated) - mu * mu) / var;
  }
  return rho;
}

std::vector<double> sample_acf(Series series, int max_lag) {
  if (max_lag < 0) throw ConfigError("max_lag must be non-negative");
  double sum = 0.0;
  std::size_t count = 0;
  for (double x : series)
    if (!is_missing(x)) {
      sum += x;
      ++count;
    }
  if (count < 2) throw NumericalError("sample autocorrelation needs two observations");
  const double mu = sum / static_cast<double>(count);
  double c0 = 0.0;
  for (double x : series)
    if (!is_missing(x)) c0 += (x - mu) * (x - mu);
  if (!(c0 > 0.0)) throw NumericalError("sample variance is zero");

  std::vector<double> rho(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + static_cast<std::size_t>(k) < series.size(); ++t) {
      const double a = series[t];
      const double b = series[t + static_cast<std::size_t>(k)];
      if (!is_missing(a) && !is_missing(b)) ck += (a - mu) * (b - mu);
    }
    rho[static_cast<std::size_t>(k)] = ck / c0;
  }
  return rho;
}

HmmModel permute_states(const HmmModel& model, const std::vector<std::size_t>& perm) {
  const std::size_t n = model.states();
  if (perm.size() != n) throw ConfigError("permutation size does not match state count");
  HmmModel out;
  out.gamma.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.delta.resize(static_cast<Eigen::Index>(n));
  out.stationary = model.stationary;
  for (std::size_t i = 0; i < n; ++i) {
    out.emissions.push_back(model.emissions[perm[i]]);
    out.delta(static_cast<Eigen::Index>(i)) = model.delta(static_cast<Eigen::Index>(perm[i]));
    for (std::size_t j = 0; j < n; ++j)
      out.gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          model.gamma(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j]));
  }
  return out;
}

HmmModel sort_states_by_mean(const HmmModel& model) {
  std::vector<std::size_t> perm(model.states());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> means;
  for (const auto& e : model.emissions) means.push_back(mean(e));
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  return permute_states(model, perm);
}

}  // namespace splinehmm
