#pragma once

#include <span>
#include <vector>

#include "dacal/matrix.hpp"

namespace dacal {

/// Weighted pool-adjacent-violators. `y` is ordered by the regressor; the
/// result is the weighted least-squares non-decreasing fit, one value per
/// input point. Weights must be positive; empty `weights` means all ones.
std::vector<double> pav_fit(std::span<const double> y, std::span<const double> weights = {});

/// Non-decreasing step function on [0, 1]. Evaluates to the value of the
/// largest breakpoint at or below the query; queries below the first
/// breakpoint take the first value.
class IsotonicMap {
 public:
  IsotonicMap() = default;
  /// Throws ConfigError unless breakpoints are strictly increasing, values
  /// non-decreasing, sizes equal and nonzero.
  IsotonicMap(std::vector<double> breakpoints, std::vector<double> values);

  /// Least-squares monotone fit of y against x. Points with equal x are
  /// pooled into one weighted observation before PAV so the result is a
  /// function of x. Throws ConfigError on empty input.
  static IsotonicMap fit(std::span<const double> x, std::span<const double> y);

  double operator()(double x) const;

  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

/// Mapped values are clamped to [kIsotonicFloor, 1] before renormalizing.
inline constexpr double kIsotonicFloor = 1e-6;
/// Strictly increasing tie-break added to mapped values (as p * kIsotonicTieBreak)
/// so two probabilities in one step stay ordered.
inline constexpr double kIsotonicTieBreak = 1e-9;

/// Accuracy-preserving multiclass isotonic regression: one shared map fitted
/// on all (probability, indicator) pairs pooled over samples and classes.
IsotonicMap fit_irm(const DenseMatrix& probs, const LabelVector& labels);
/// Maps every entry, clamps, adds the tie-break, renormalizes each row. The
/// first-index argmax of each row is preserved.
DenseMatrix apply_irm(const IsotonicMap& map, const DenseMatrix& probs);

/// One-vs-all isotonic regression: one map per class. Not accuracy preserving.
struct OvaIsotonic {
  std::vector<IsotonicMap> maps;
};

OvaIsotonic fit_ir(const DenseMatrix& probs, const LabelVector& labels);
DenseMatrix apply_ir(const OvaIsotonic& model, const DenseMatrix& probs);

}  // namespace dacal
