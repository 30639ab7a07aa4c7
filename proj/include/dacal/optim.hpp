#pragma once

#include <functional>
#include <span>
#include <vector>

namespace dacal {

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using GradientObjective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct BoxMinimizeOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-9;  // on |f_k - f_{k+1}| / max(|f_k|, tiny)
  double projected_gradient_tolerance = 1e-7;  // infinity norm
  int history = 10;
};

struct BoxMinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  double initial_value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Projected limited-memory BFGS for min f(x) subject to x >= lower.
/// Variables at their bound with an outward-pointing gradient are frozen for
/// the step; the quasi-Newton direction is computed on the remaining free
/// variables and the trial point is projected back onto the box before an
/// Armijo backtracking test. Every accepted step strictly decreases f, so the
/// returned value never exceeds the value at the (projected) start point.
/// Never throws on non-convergence; check `converged`.
BoxMinimizeResult minimize_lower_bounded(const GradientObjective& objective,
                                         std::vector<double> x0, std::span<const double> lower,
                                         const BoxMinimizeOptions& options = {});

/// Golden-section search for a minimum of f on [lo, hi]; stops when the
/// bracket is narrower than `tolerance`. Returns the abscissa.
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tolerance);

}  // namespace dacal
