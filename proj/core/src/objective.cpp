// Negative penalized log-likelihood and its gradient.
//
// Forward pass (scaled): p_1 = delta, c_t = sum_i p_t(i) f_i(x_t),
// phi_t = p_t * f(x_t) / c_t, p_{t+1} = phi_t Gamma, log L = sum_t log c_t.
// Backward pass: b_T = 1, b_t(i) = sum_j Gamma_ij f_j(x_{t+1}) b_{t+1}(j) / c_{t+1}.
// Then d log L / d f_i(x_t) = p_t(i) b_t(i) / c_t,
//      d log L / d Gamma_ij = sum_{t>=2} phi_{t-1}(i) f_j(x_t) b_t(j) / c_t,
//      d log L / d delta_i  = f_i(x_1) b_1(i) / c_1.
// delta solves delta A = 1' with A = I - Gamma + U, so a perturbation of
// Gamma moves delta by delta dGamma A^{-1}.

#include <algorithm>
#include <cmath>
#include <limits>

#include "splinehmm/estimation.hpp"

namespace splinehmm {
namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

struct EmissionParams {
  EmissionFamily family = EmissionFamily::Normal;
  std::vector<double> weights;  // spline
  double mu1 = 0.0, sd1 = 1.0, mu2 = 0.0, sd2 = 1.0, w = 1.0;
};

double gauss(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * z * z);
}

// r -> D' r for the first-difference operator (Da)_k = a_{k+1} - a_k.
std::vector<double> difference_adjoint(const std::vector<double>& r) {
  std::vector<double> out(r.size() + 1, 0.0);
  for (std::size_t k = 0; k < r.size(); ++k) {
    out[k] -= r[k];
    out[k + 1] += r[k];
  }
  return out;
}

std::vector<double> differences(std::vector<double> d, int order) {
  for (int r = 0; r < order && !d.empty(); ++r) {
    for (std::size_t k = 0; k + 1 < d.size(); ++k) d[k] = d[k + 1] - d[k];
    d.pop_back();
  }
  return d;
}

}  // namespace

PenalizedObjective::PenalizedObjective(const ParameterLayout& layout, Series series, PenaltySpec spec,
                                       GradientMethod method)
    : layout_(layout), series_(series.begin(), series.end()), spec_(std::move(spec)), method_(method) {
  validate_penalty(spec_, layout_.structure());
  if (layout_.structure().has_spline()) {
    local_.reserve(series_.size());
    for (double x : series_)
      local_.push_back(is_missing(x) ? SplineBasis::LocalValues{} : layout_.structure().basis->local(x));
  }
}

double PenalizedObjective::operator()(std::span<const double> theta, std::span<double> grad) const {
  if (grad.empty() || method_ == GradientMethod::Analytic) {
    try {
      return evaluate(theta, grad);
    } catch (const NumericalError&) {
      // e.g. a transition matrix that underflowed to a reducible one
      return std::numeric_limits<double>::infinity();
    }
  }
  const double v = value(theta);
  const auto g = central_difference_gradient([this](std::span<const double> x) { return value(x); }, theta);
  std::copy(g.begin(), g.end(), grad.begin());
  return v;
}

double PenalizedObjective::value(std::span<const double> theta) const { return (*this)(theta, {}); }

std::vector<double> PenalizedObjective::analytic_gradient(std::span<const double> theta) const {
  std::vector<double> g(theta.size());
  evaluate(theta, g);
  return g;
}

double PenalizedObjective::evaluate(std::span<const double> theta, std::span<double> grad) const {
  const std::size_t n = layout_.states();
  const std::size_t T = series_.size();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto& families = layout_.structure().families;
  const double inf = std::numeric_limits<double>::infinity();
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);

  const Matrix gamma = layout_.transition_matrix(theta);
  Vector delta = Vector::Ones(ni);
  Matrix a_matrix;
  if (n > 1) {
    a_matrix = Matrix::Identity(ni, ni) - gamma + Matrix::Ones(ni, ni);
    // Same solve as unpack(), so both agree on which points are admissible.
    delta = stationary_distribution(gamma);
  }

  std::vector<EmissionParams> params(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = theta.data() + layout_.emission_offset(i);
    EmissionParams& e = params[i];
    e.family = families[i];
    switch (e.family) {
      case EmissionFamily::Spline: {
        const std::size_t size = layout_.structure().basis->size();
        const std::size_t center = static_cast<std::size_t>(layout_.structure().basis->half_width());
        e.weights.resize(size);
        double top = 0.0;
        for (std::size_t f = 0; f + 1 < size; ++f) top = std::max(top, p[f]);
        double total = 0.0;
        for (std::size_t j = 0, f = 0; j < size; ++j) {
          e.weights[j] = std::exp((j == center ? 0.0 : p[f++]) - top);
          total += e.weights[j];
        }
        for (double& a : e.weights) a /= total;
        break;
      }
      case EmissionFamily::Normal:
        e.mu1 = p[0];
        e.sd1 = std::exp(p[1]);
        break;
      case EmissionFamily::NormalMixture:
        e.mu1 = p[0];
        e.sd1 = std::exp(p[1]);
        e.mu2 = p[2];
        e.sd2 = std::exp(p[3]);
        e.w = 1.0 / (1.0 + std::exp(-p[4]));
        break;
    }
  }

  // f_i(x_t); missing observations leave 1.
  std::vector<double> f(T * n, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double x = series_[t];
    if (is_missing(x)) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const EmissionParams& e = params[i];
      double v = 0.0;
      switch (e.family) {
        case EmissionFamily::Spline: {
          const auto& lv = local_[t];
          for (std::size_t r = 0; r < lv.count; ++r) v += e.weights[lv.first + r] * lv.values[r];
          break;
        }
        case EmissionFamily::Normal:
          v = gauss(x, e.mu1, e.sd1);
          break;
        case EmissionFamily::NormalMixture:
          v = e.w * gauss(x, e.mu1, e.sd1) + (1.0 - e.w) * gauss(x, e.mu2, e.sd2);
          break;
      }
      f[t * n + i] = v;
    }
  }

  // Forward.
  std::vector<double> pred(T * n), filt(T * n), scale(T);
  double loglik = 0.0;
  for (std::size_t i = 0; i < n; ++i) pred[i] = delta(static_cast<Eigen::Index>(i));
  for (std::size_t t = 0; t < T; ++t) {
    double* pt = pred.data() + t * n;
    double* ft = filt.data() + t * n;
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ft[i] = pt[i] * f[t * n + i];
      c += ft[i];
    }
    if (!(c > 0.0) || !std::isfinite(c)) return inf;
    for (std::size_t i = 0; i < n; ++i) ft[i] /= c;
    scale[t] = c;
    loglik += std::log(c);
    if (t + 1 < T) {
      double* next = pred.data() + (t + 1) * n;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += ft[i] * gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        next[j] = s;
      }
    }
  }

  double pen = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (families[i] != EmissionFamily::Spline || spec_.lambda[i] == 0.0) continue;
    const auto d = differences(params[i].weights, spec_.order);
    double s = 0.0;
    for (double v : d) s += v * v;
    pen += 0.5 * spec_.lambda[i] * s;
  }
  const double value = -(loglik - pen);
  if (grad.empty()) return value;

  // Backward.
  std::vector<double> back(T * n, 1.0);
  for (std::size_t t = T - 1; t > 0; --t) {
    const double* bn = back.data() + t * n;
    double* bt = back.data() + (t - 1) * n;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        s += gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * f[t * n + j] * bn[j];
      bt[i] = s / scale[t];
    }
  }

  // Transition block: d log L / d Gamma.
  Matrix dgamma = Matrix::Zero(ni, ni);
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = filt.data() + (t - 1) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = f[t * n + j] * back[t * n + j] / scale[t];
      for (std::size_t i = 0; i < n; ++i) dgamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += prev[i] * r;
    }
  }
  if (n > 1) {
    Vector gdelta(ni);
    for (std::size_t i = 0; i < n; ++i) gdelta(static_cast<Eigen::Index>(i)) = f[i] * back[i] / scale[0];
    const Vector v = a_matrix.partialPivLu().solve(gdelta);
    dgamma += delta * v.transpose();
  }
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < ni; ++i) {
    const double mean_row = gamma.row(i).dot(dgamma.row(i));
    for (Eigen::Index j = 0; j < ni; ++j)
      if (j != i) grad[pos++] = -gamma(i, j) * (dgamma(i, j) - mean_row);
  }

  // Emission blocks: weight_t = d log L / d f_i(x_t).
  for (std::size_t i = 0; i < n; ++i) {
    const EmissionParams& e = params[i];
    double* g = grad.data() + layout_.emission_offset(i);
    switch (e.family) {
      case EmissionFamily::Spline: {
        const std::size_t size = e.weights.size();
        std::vector<double> h(size, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
          if (is_missing(series_[t])) continue;
          const double wt = pred[t * n + i] * back[t * n + i] / scale[t];
          const auto& lv = local_[t];
          for (std::size_t r = 0; r < lv.count; ++r) h[lv.first + r] += wt * lv.values[r];
        }
        if (spec_.lambda[i] != 0.0) {
          std::vector<double> r = differences(e.weights, spec_.order);
          for (int k = 0; k < spec_.order; ++k) r = difference_adjoint(r);
          for (std::size_t j = 0; j < size; ++j) h[j] -= spec_.lambda[i] * r[j];
        }
        double avg = 0.0;
        for (std::size_t j = 0; j < size; ++j) avg += e.weights[j] * h[j];
        const std::size_t center = static_cast<std::size_t>(layout_.structure().basis->half_width());
        for (std::size_t j = 0, fi = 0; j < size; ++j)
          if (j != center) g[fi++] = -e.weights[j] * (h[j] - avg);
        break;
      }
      case EmissionFamily::Normal: {
        double g_mu = 0.0, g_ls = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const double x = series_[t];
          if (is_missing(x)) continue;
          const double wt = pred[t * n + i] * back[t * n + i] / scale[t] * f[t * n + i];
          const double z = (x - e.mu1) / e.sd1;
          g_mu += wt * z / e.sd1;
          g_ls += wt * (z * z - 1.0);
        }
        g[0] = -g_mu;
        g[1] = -g_ls;
        break;
      }
      case EmissionFamily::NormalMixture: {
        double g_mu1 = 0.0, g_ls1 = 0.0, g_mu2 = 0.0, g_ls2 = 0.0, g_eta = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const double x = series_[t];
          if (is_missing(x)) continue;
          const double wt = pred[t * n + i] * back[t * n + i] / scale[t];
          const double n1 = gauss(x, e.mu1, e.sd1);
          const double n2 = gauss(x, e.mu2, e.sd2);
          const double z1 = (x - e.mu1) / e.sd1;
          const double z2 = (x - e.mu2) / e.sd2;
          g_mu1 += wt * e.w * n1 * z1 / e.sd1;
          g_ls1 += wt * e.w * n1 * (z1 * z1 - 1.0);
          g_mu2 += wt * (1.0 - e.w) * n2 * z2 / e.sd2;
          g_ls2 += wt * (1.0 - e.w) * n2 * (z2 * z2 - 1.0);
          g_eta += wt * e.w * (1.0 - e.w) * (n1 - n2);
        }
        g[0] = -g_mu1;
        g[1] = -g_ls1;
        g[2] = -g_mu2;
        g[3] = -g_ls2;
        g[4] = -g_eta;
        break;
      }
    }
  }
  return value;
}

}  // namespace splinehmm
