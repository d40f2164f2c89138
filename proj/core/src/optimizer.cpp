#include "splinehmm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace splinehmm {
namespace {

using Vec = Eigen::VectorXd;

constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;
constexpr int kMaxLineSearch = 40;

struct Point {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative along p
  Vec x;
  Vec g;
};

class Evaluator {
 public:
  Evaluator(const Objective& objective, int& counter) : objective_(objective), counter_(counter) {}

  double operator()(const Vec& x, Vec& g) const {
    g.resize(x.size());
    ++counter_;
    double f = objective_(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                          std::span<double>(g.data(), static_cast<std::size_t>(g.size())));
    if (!std::isfinite(f) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    return f;
  }

 private:
  const Objective& objective_;
  int& counter_;
};

// Strong Wolfe line search (Nocedal & Wright, algorithms 3.5 and 3.6) with a
// safeguarded quadratic interpolation in the zoom phase.
bool line_search(const Evaluator& eval, const Vec& x, double f0, const Vec& p, double slope0,
                 double alpha_init, Point& out) {
  auto probe = [&](double alpha) {
    Point pt;
    pt.alpha = alpha;
    pt.x = x + alpha * p;
    pt.f = eval(pt.x, pt.g);
    pt.slope = std::isfinite(pt.f) ? pt.g.dot(p) : std::numeric_limits<double>::quiet_NaN();
    return pt;
  };
  auto sufficient = [&](const Point& pt) {
    return std::isfinite(pt.f) && pt.f <= f0 + kArmijo * pt.alpha * slope0;
  };

  auto zoom = [&](Point lo, Point hi) -> bool {
    for (int j = 0; j < kMaxLineSearch; ++j) {
      const double a = std::min(lo.alpha, hi.alpha);
      const double b = std::max(lo.alpha, hi.alpha);
      const double width = b - a;
      if (width <= 1e-16 * std::max(1.0, b)) break;
      double alpha = 0.5 * (a + b);
      if (std::isfinite(hi.f)) {
        const double d = hi.alpha - lo.alpha;
        const double denom = 2.0 * (hi.f - lo.f - lo.slope * d);
        if (denom > 0.0) {
          const double trial = lo.alpha - lo.slope * d * d / denom;
          if (trial > a + 0.1 * width && trial < b - 0.1 * width) alpha = trial;
        }
      }
      Point cur = probe(alpha);
      if (!sufficient(cur) || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kCurvature * slope0) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    if (lo.alpha > 0.0) {  // sufficient decrease without the curvature condition
      out = std::move(lo);
      return true;
    }
    return false;
  };

  Point prev;
  prev.alpha = 0.0;
  prev.f = f0;
  prev.slope = slope0;
  prev.x = x;
  double alpha = alpha_init;
  for (int i = 0; i < kMaxLineSearch; ++i) {
    Point cur = probe(alpha);
    if (!sufficient(cur) || (i > 0 && cur.f >= prev.f)) return zoom(std::move(prev), std::move(cur));
    if (std::abs(cur.slope) <= -kCurvature * slope0) {
      out = std::move(cur);
      return true;
    }
    if (cur.slope >= 0.0) return zoom(std::move(cur), std::move(prev));
    prev = std::move(cur);
    alpha *= 2.0;
  }
  out = std::move(prev);
  return out.alpha > 0.0;
}

}  // namespace

std::string to_string(OptimizerStatus status) {
  switch (status) {
    case OptimizerStatus::GradientTolerance: return "gradient_tolerance";
    case OptimizerStatus::ObjectiveTolerance: return "objective_tolerance";
    case OptimizerStatus::Stalled: return "stalled";
    case OptimizerStatus::IterationLimit: return "iteration_limit";
    case OptimizerStatus::NonFiniteStart: return "non_finite_start";
  }
  return "unknown";
}

OptimizerResult minimize_bfgs(const Objective& objective, std::vector<double> x0,
                              const OptimizerOptions& options) {
  OptimizerResult result;
  const Eigen::Index n = static_cast<Eigen::Index>(x0.size());
  Evaluator eval(objective, result.evaluations);

  Vec x = Eigen::Map<const Vec>(x0.data(), n);
  Vec g;
  double f = eval(x, g);
  auto finish = [&](OptimizerStatus status) {
    result.x.assign(x.data(), x.data() + n);
    result.value = f;
    result.grad_max_norm = (g.size() == n && n > 0) ? g.cwiseAbs().maxCoeff() : 0.0;
    result.status = status;
    return result;
  };
  if (!std::isfinite(f)) return finish(OptimizerStatus::NonFiniteStart);
  if (n == 0) return finish(OptimizerStatus::GradientTolerance);

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool identity = true;
  bool scaled = false;
  int small_changes = 0;

  for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
    const double gmax = g.cwiseAbs().maxCoeff();
    if (gmax <= options.grad_tolerance) return finish(OptimizerStatus::GradientTolerance);

    Vec p = -(h * g);
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      h.setIdentity();
      identity = true;
      scaled = false;
      p = -g;
      slope = g.dot(p);
    }
    const double alpha_init = identity && !scaled ? std::min(1.0, 1.0 / gmax) : 1.0;

    Point next;
    if (!line_search(eval, x, f, p, slope, alpha_init, next)) {
      if (identity) return finish(OptimizerStatus::Stalled);
      h.setIdentity();
      identity = true;
      scaled = false;
      continue;
    }

    const Vec s = next.x - x;
    const Vec y = next.g - g;
    const double f_prev = f;
    x = std::move(next.x);
    g = std::move(next.g);
    f = next.f;

    const double ys = y.dot(s);
    if (ys > 1e-10 * s.norm() * y.norm()) {
      if (!scaled) {
        h = Eigen::MatrixXd::Identity(n, n) * (ys / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / ys;
      const Vec hy = h * y;
      // H+ = (I - rho s y') H (I - rho y s') + rho s s'
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
      identity = false;
    }

    if (f_prev - f <= options.rel_tolerance * std::max(1.0, std::abs(f))) {
      if (++small_changes >= 2) {
        ++result.iterations;
        return finish(OptimizerStatus::ObjectiveTolerance);
      }
    } else {
      small_changes = 0;
    }
  }
  return finish(OptimizerStatus::IterationLimit);
}

OptimizerResult polish_newton(const Objective& objective, std::vector<double> x0,
                              const OptimizerOptions& options) {
  OptimizerResult result;
  const Eigen::Index n = static_cast<Eigen::Index>(x0.size());
  Evaluator eval(objective, result.evaluations);
  Vec x = Eigen::Map<const Vec>(x0.data(), n);
  Vec g;
  double f = eval(x, g);
  auto finish = [&](OptimizerStatus status) {
    result.x.assign(x.data(), x.data() + n);
    result.value = f;
    result.grad_max_norm = (g.size() == n && n > 0) ? g.cwiseAbs().maxCoeff() : 0.0;
    result.status = status;
    return result;
  };
  if (!std::isfinite(f)) return finish(OptimizerStatus::NonFiniteStart);
  if (n == 0) return finish(OptimizerStatus::GradientTolerance);

  const double step = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::MatrixXd hess(n, n);
  double mu = 0.0;
  int flat = 0;
  for (result.iterations = 0; result.iterations < options.polish_iterations; ++result.iterations) {
    if (g.cwiseAbs().maxCoeff() <= options.grad_tolerance) return finish(OptimizerStatus::GradientTolerance);

    Vec gp;
    Vec gm;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = step * std::max(1.0, std::abs(x(i)));
      Vec xp = x;
      Vec xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fp = eval(xp, gp);
      const double fm = eval(xm, gm);
      if (!std::isfinite(fp) || !std::isfinite(fm)) return finish(OptimizerStatus::Stalled);
      hess.col(i) = (gp - gm) / (2.0 * h);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    const double scale = std::max(1e-12, hess.diagonal().cwiseAbs().maxCoeff());

    bool accepted = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      Eigen::MatrixXd damped = hess;
      damped.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> llt(damped);
      if (llt.info() != Eigen::Success) {
        mu = std::max(4.0 * mu, 1e-10 * scale);
        continue;
      }
      const Vec p = llt.solve(-g);
      const double predicted = -(g.dot(p) + 0.5 * p.dot(hess * p));
      Vec gn;
      const Vec xn = x + p;
      const double fn = eval(xn, gn);
      const double actual = f - fn;
      const double ratio = predicted > 0.0 ? actual / predicted : -1.0;
      if (std::isfinite(fn) && actual >= 0.0 && ratio > 0.1) {
        flat = actual <= 1e-14 * std::max(1.0, std::abs(f)) ? flat + 1 : 0;
        x = xn;
        g = std::move(gn);
        f = fn;
        accepted = true;
        if (ratio > 0.75) mu = mu < 1e-10 * scale ? 0.0 : mu / 4.0;
      } else {
        mu = std::max(4.0 * mu, 1e-10 * scale);
      }
    }
    if (!accepted) return finish(OptimizerStatus::Stalled);
    if (flat >= 3) return finish(OptimizerStatus::Stalled);
  }
  if (g.cwiseAbs().maxCoeff() <= options.grad_tolerance) return finish(OptimizerStatus::GradientTolerance);
  return finish(OptimizerStatus::IterationLimit);
}

OptimizerResult minimize(const Objective& objective, std::vector<double> x0, const OptimizerOptions& options) {
  OptimizerResult first = minimize_bfgs(objective, std::move(x0), options);
  if (options.polish_iterations <= 0 || first.status == OptimizerStatus::GradientTolerance ||
      first.status == OptimizerStatus::NonFiniteStart || !std::isfinite(first.value))
    return first;
  OptimizerResult second = polish_newton(objective, first.x, options);
  second.iterations += first.iterations;
  second.evaluations += first.evaluations;
  if (!(second.value <= first.value)) {
    first.evaluations = second.evaluations;
    return first;
  }
  // Polishing that merely stalls keeps the first phase's verdict.
  if (second.status != OptimizerStatus::GradientTolerance) second.status = first.status;
  return second;
}

std::vector<double> central_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x) {
  const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
  std::vector<double> xs(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double xi = xs[i];
    const double h = eps * std::max(1.0, std::abs(xi));
    xs[i] = xi + h;
    const double up = f(xs);
    xs[i] = xi - h;
    const double down = f(xs);
    xs[i] = xi;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<double> forward_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x) {
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
  std::vector<double> xs(x.begin(), x.end());
  const double f0 = f(xs);
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double xi = xs[i];
    const double h = eps * std::max(1.0, std::abs(xi));
    xs[i] = xi + h;
    grad[i] = (f(xs) - f0) / h;
    xs[i] = xi;
  }
  return grad;
}

}  // namespace splinehmm
