#ifndef SPLINEHMM_OPTIMIZER_HPP
#define SPLINEHMM_OPTIMIZER_HPP

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace splinehmm {

struct OptimizerOptions {
  /// Stop when (f_prev - f) <= rel_tolerance * max(1, |f|).
  double rel_tolerance = 1e-8;
  /// Stop when max |grad| <= grad_tolerance.
  double grad_tolerance = 1e-6;
  int max_iterations = 2000;
  /// Damped Newton iterations (Hessian by differencing the gradient) run
  /// after BFGS when the gradient is still above grad_tolerance; 0 disables.
  int polish_iterations = 0;
};

enum class OptimizerStatus {
  GradientTolerance,
  ObjectiveTolerance,
  /// No step along the steepest-descent direction decreases f further.
  Stalled,
  IterationLimit,
  NonFiniteStart,
};

std::string to_string(OptimizerStatus status);

struct OptimizerResult {
  std::vector<double> x;
  double value = 0.0;
  double grad_max_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  OptimizerStatus status = OptimizerStatus::IterationLimit;

  bool converged() const {
    return status == OptimizerStatus::GradientTolerance ||
           status == OptimizerStatus::ObjectiveTolerance || status == OptimizerStatus::Stalled;
  }
};

/// Objective to minimize. Writes the gradient into `grad` when it is
/// non-empty. Non-finite return values are treated as +infinity.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// BFGS with a strong-Wolfe line search.
OptimizerResult minimize_bfgs(const Objective& objective, std::vector<double> x0,
                              const OptimizerOptions& options = {});

/// Levenberg-damped Newton steps from x0 until max |grad| <= grad_tolerance.
OptimizerResult polish_newton(const Objective& objective, std::vector<double> x0,
                              const OptimizerOptions& options = {});

/// BFGS followed by polish_newton when needed; keeps the better of the two.
OptimizerResult minimize(const Objective& objective, std::vector<double> x0,
                         const OptimizerOptions& options = {});

/// Central-difference gradient of a value-only function, step h_i = eps^(1/3) max(1, |x_i|).
std::vector<double> central_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x);

/// Forward-difference gradient, step h_i = sqrt(eps) max(1, |x_i|).
std::vector<double> forward_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x);

}  // namespace splinehmm

#endif  // SPLINEHMM_OPTIMIZER_HPP
