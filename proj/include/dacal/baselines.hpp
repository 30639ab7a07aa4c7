#pragma once

#include <array>

#include "dacal/matrix.hpp"

namespace dacal {

/// Single global temperature; probabilities are softmax(z / T).
struct TempScaler {
  double temperature = 1.0;
};

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 1e3;

/// Mean negative log-likelihood of softmax(z / T).
double temperature_nll(const DenseMatrix& logits, const LabelVector& labels, double temperature);

/// NLL-optimal temperature in [1e-3, 1e3]: golden-section search over ln T,
/// then Newton steps on 1/T until |d ln T| < 1e-6. Throws ConfigError for
/// fewer than two samples, DataError on non-finite logits.
TempScaler fit_ts(const DenseMatrix& logits, const LabelVector& labels);
DenseMatrix apply_ts(const TempScaler& model, const DenseMatrix& logits);

/// Ensemble temperature scaling: mixture of softmax(z / T), softmax(z) and
/// the uniform distribution.
struct EtsModel {
  double temperature = 1.0;
  std::array<double, 3> mix_weights{1.0, 0.0, 0.0};
};

/// Summed squared error of the ETS mixture against one-hot labels.
double ets_squared_error(const EtsModel& model, const DenseMatrix& logits, const LabelVector& labels);

/// Temperature from fit_ts, then simplex weights minimizing the squared error
/// (exact solve over the faces of the simplex, TS vertex on ties).
EtsModel fit_ets(const DenseMatrix& logits, const LabelVector& labels);
DenseMatrix apply_ets(const EtsModel& model, const DenseMatrix& logits);

/// Euclidean projection onto the probability simplex.
std::array<double, 3> project_to_simplex(std::array<double, 3> v);

}  // namespace dacal
