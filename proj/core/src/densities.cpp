#include "splinehmm/densities.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

namespace splinehmm {
namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr int kKldPoints = 4096;
constexpr double kKldFloor = 1e-12;
constexpr double kNormalReach = 12.0;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * z * z);
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * M_SQRT2));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw NumericalError("normal quantile requires p in (0, 1)");
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p);
}

SplineDensity::SplineDensity(std::shared_ptr<const SplineBasis> basis,
                             std::span<const double> free_logits)
    : basis_(std::move(basis)), free_logits_(free_logits.begin(), free_logits.end()) {
  if (!basis_) throw ConfigError("spline density requires a basis");
  if (free_logits_.size() != basis_->size() - 1)
    throw ConfigError("spline density expects " + std::to_string(basis_->size() - 1) +
                      " free logits, got " + std::to_string(free_logits_.size()));
  for (double b : free_logits_)
    if (!std::isfinite(b)) throw ConfigError("spline logits must be finite");
  update_weights();
}

SplineDensity SplineDensity::from_weights(std::shared_ptr<const SplineBasis> basis,
                                          std::span<const double> weights) {
  if (!basis) throw ConfigError("spline density requires a basis");
  if (weights.size() != basis->size())
    throw ConfigError("spline density expects " + std::to_string(basis->size()) + " weights");
  const std::size_t center = static_cast<std::size_t>(basis->half_width());
  for (double a : weights)
    if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("spline weights must be positive");
  std::vector<double> logits;
  logits.reserve(weights.size() - 1);
  for (std::size_t j = 0; j < weights.size(); ++j)
    if (j != center) logits.push_back(std::log(weights[j] / weights[center]));
  return SplineDensity(std::move(basis), logits);
}

SplineDensity SplineDensity::uniform(std::shared_ptr<const SplineBasis> basis) {
  if (!basis) throw ConfigError("spline density requires a basis");
  const std::vector<double> zeros(basis->size() - 1, 0.0);
  return SplineDensity(std::move(basis), zeros);
}

void SplineDensity::update_weights() {
  const std::size_t n = basis_->size();
  const std::size_t center = static_cast<std::size_t>(basis_->half_width());
  weights_.assign(n, 0.0);
  double top = 0.0;  // pinned logit
  for (double b : free_logits_) top = std::max(top, b);
  double total = 0.0;
  for (std::size_t j = 0, f = 0; j < n; ++j) {
    const double beta = (j == center) ? 0.0 : free_logits_[f++];
    weights_[j] = std::exp(beta - top);
    total += weights_[j];
  }
  for (double& a : weights_) a /= total;
}

double SplineDensity::pdf(double x) const {
  const auto lv = basis_->local(x);
  double v = 0.0;
  for (std::size_t r = 0; r < lv.count; ++r) v += weights_[lv.first + r] * lv.values[r];
  return v;
}

double SplineDensity::cdf(double x) const {
  if (x <= basis_->support_lower()) return 0.0;
  if (x >= basis_->support_upper()) return 1.0;
  // Elements whose support ends left of x contribute their full weight.
  double v = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (basis_->support_begin(j) >= x) break;
    v += weights_[j] * basis_->cdf(j, x);
  }
  return std::clamp(v, 0.0, 1.0);
}

double SplineDensity::sample(Rng& rng) const {
  const double u = uniform_open(rng);
  double acc = 0.0;
  std::size_t j = 0;
  for (; j + 1 < weights_.size(); ++j) {
    acc += weights_[j];
    if (u < acc) break;
  }
  return basis_->quantile(j, uniform_open(rng));
}

double SplineDensity::mean() const {
  double m = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) m += weights_[j] * basis_->center(j);
  return m;
}

double SplineDensity::second_moment() const {
  const auto moments = basis_->moments();
  double m = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) m += weights_[j] * moments[j].second;
  return m;
}

double pdf(const StateDensity& d, double x) {
  return std::visit(overloaded{
                        [x](const SplineDensity& s) { return s.pdf(x); },
                        [x](const NormalDensity& n) { return normal_pdf(x, n.mean, n.sd); },
                        [x](const NormalMixtureDensity& m) {
                          return m.weight * normal_pdf(x, m.mean1, m.sd1) +
                                 (1.0 - m.weight) * normal_pdf(x, m.mean2, m.sd2);
                        },
                    },
                    d);
}

double cdf(const StateDensity& d, double x) {
  return std::visit(overloaded{
                        [x](const SplineDensity& s) { return s.cdf(x); },
                        [x](const NormalDensity& n) { return normal_cdf(x, n.mean, n.sd); },
                        [x](const NormalMixtureDensity& m) {
                          return m.weight * normal_cdf(x, m.mean1, m.sd1) +
                                 (1.0 - m.weight) * normal_cdf(x, m.mean2, m.sd2);
                        },
                    },
                    d);
}

double sample(const StateDensity& d, Rng& rng) {
  return std::visit(overloaded{
                        [&rng](const SplineDensity& s) { return s.sample(rng); },
                        [&rng](const NormalDensity& n) { return n.mean + n.sd * standard_normal(rng); },
                        [&rng](const NormalMixtureDensity& m) {
                          const bool first = uniform_open(rng) < m.weight;
                          const double z = standard_normal(rng);
                          return first ? m.mean1 + m.sd1 * z : m.mean2 + m.sd2 * z;
                        },
                    },
                    d);
}

double mean(const StateDensity& d) {
  return std::visit(overloaded{
                        [](const SplineDensity& s) { return s.mean(); },
                        [](const NormalDensity& n) { return n.mean; },
                        [](const NormalMixtureDensity& m) {
                          return m.weight * m.mean1 + (1.0 - m.weight) * m.mean2;
                        },
                    },
                    d);
}

double second_moment(const StateDensity& d) {
  return std::visit(overloaded{
                        [](const SplineDensity& s) { return s.second_moment(); },
                        [](const NormalDensity& n) { return n.mean * n.mean + n.sd * n.sd; },
                        [](const NormalMixtureDensity& m) {
                          return m.weight * (m.mean1 * m.mean1 + m.sd1 * m.sd1) +
                                 (1.0 - m.weight) * (m.mean2 * m.mean2 + m.sd2 * m.sd2);
                        },
                    },
                    d);
}

double variance(const StateDensity& d) {
  const double m = mean(d);
  return second_moment(d) - m * m;
}

std::pair<double, double> effective_support(const StateDensity& d) {
  return std::visit(
      overloaded{
          [](const SplineDensity& s) {
            return std::pair{s.basis().support_lower(), s.basis().support_upper()};
          },
          [](const NormalDensity& n) {
            return std::pair{n.mean - kNormalReach * n.sd, n.mean + kNormalReach * n.sd};
          },
          [](const NormalMixtureDensity& m) {
            return std::pair{std::min(m.mean1 - kNormalReach * m.sd1, m.mean2 - kNormalReach * m.sd2),
                             std::max(m.mean1 + kNormalReach * m.sd1, m.mean2 + kNormalReach * m.sd2)};
          },
      },
      d);
}

std::string family_name(const StateDensity& d) {
  return std::visit(overloaded{
                        [](const SplineDensity&) { return std::string("spline"); },
                        [](const NormalDensity&) { return std::string("normal"); },
                        [](const NormalMixtureDensity&) { return std::string("normal_mixture"); },
                    },
                    d);
}

void validate(const StateDensity& d) {
  std::visit(overloaded{
                 [](const SplineDensity&) {},
                 [](const NormalDensity& n) {
                   if (!std::isfinite(n.mean) || !(n.sd > 0.0) || !std::isfinite(n.sd))
                     throw ConfigError("normal density requires finite mean and sd > 0");
                 },
                 [](const NormalMixtureDensity& m) {
                   if (!(m.sd1 > 0.0) || !(m.sd2 > 0.0) || !std::isfinite(m.sd1) ||
                       !std::isfinite(m.sd2) || !std::isfinite(m.mean1) || !std::isfinite(m.mean2))
                     throw ConfigError("normal mixture requires finite means and sds > 0");
                   // The closed endpoints allow degenerate single-component mixtures.
                   if (!(m.weight >= 0.0 && m.weight <= 1.0))
                     throw ConfigError("normal mixture weight must lie in [0, 1]");
                 },
             },
             d);
}

double kld(const StateDensity& truth, const StateDensity& estimate) {
  const auto [t_lo, t_hi] = effective_support(truth);
  const auto [e_lo, e_hi] = effective_support(estimate);
  const double lo = std::min(t_lo, e_lo);
  const double hi = std::max(t_hi, e_hi);
  const double step = (hi - lo) / (kKldPoints - 1);

  double sum = 0.0;
  for (int i = 0; i < kKldPoints; ++i) {
    const double x = lo + step * i;
    const double p = pdf(truth, x);
    if (p < kKldFloor) continue;
    const double q = pdf(estimate, x);
    if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
    const double w = (i == 0 || i == kKldPoints - 1) ? 0.5 : 1.0;
    sum += w * p * std::log(p / q);
  }
  return std::max(0.0, sum * step);
}

double kld_within(const StateDensity& truth, const StateDensity& estimate, double lower, double upper) {
  if (!(upper > lower)) throw ConfigError("kld_within: empty interval");
  const double step = (upper - lower) / (kKldPoints - 1);
  double sum = 0.0;
  for (int i = 0; i < kKldPoints; ++i) {
    const double x = lower + step * i;
    const double p = pdf(truth, x);
    if (p < kKldFloor) continue;
    const double q = pdf(estimate, x);
    if (!(q > 0.0)) continue;
    const double w = (i == 0 || i == kKldPoints - 1) ? 0.5 : 1.0;
    sum += w * p * std::log(p / q);
  }
  return std::max(0.0, sum * step);
}

}  // namespace splinehmm
