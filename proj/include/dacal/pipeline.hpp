#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "dacal/baselines.hpp"
#include "dacal/dataset.hpp"
#include "dacal/density_scaler.hpp"
#include "dacal/isotonic.hpp"
#include "dacal/knn.hpp"

namespace dacal {

enum class BaseKind { none, ts, ets, irm, ir };

std::string_view to_string(BaseKind kind);

/// Method grammar "<base>[+dac]" with base in {ts, ets, irm, ir, none}.
/// The density scaler is always the inner map; "dac+ts" is rejected.
struct MethodSpec {
  BaseKind base = BaseKind::ts;
  bool dac = false;

  /// Throws ConfigError on anything outside the grammar.
  static MethodSpec parse(std::string_view text);
  std::string str() const;

  bool operator==(const MethodSpec&) const = default;
};

using BaseModel = std::variant<std::monostate, TempScaler, EtsModel, IsotonicMap, OvaIsotonic>;

/// A fitted calibrator: probabilities are base(dac(logits)).
struct CalibratorModel {
  MethodSpec method;
  BaseModel base;
  std::optional<DacModel> dac;
  std::optional<FitReport> dac_report;
};

struct ComposeOptions {
  DacFitOptions dac{};
};

/// Fits the density scaler on `val` (when requested), rescales the
/// validation logits with it and fits the base calibrator on the result.
/// `indices` must be built on the training split; they are only used for
/// "+dac" methods.
CalibratorModel compose(const MethodSpec& method, const CalibrationDataset& val,
                        std::span<const KnnIndex> indices, const ComposeOptions& options = {});

/// Same as compose with the validation densities already computed (nullptr
/// for methods without the density scaler).
CalibratorModel compose_with_densities(const MethodSpec& method, const CalibrationDataset& val,
                                       const DensityMatrix* densities,
                                       const ComposeOptions& options = {});

/// Calibrated probabilities for a split; mirrors the fit path.
DenseMatrix predict_proba(const CalibratorModel& model, const CalibrationDataset& data,
                          std::span<const KnnIndex> indices);

DenseMatrix predict_proba_with_densities(const CalibratorModel& model, const DenseMatrix& logits,
                                         const DensityMatrix* densities);

/// Applies only the base calibrator to (possibly rescaled) logits.
DenseMatrix apply_base(const BaseModel& base, const DenseMatrix& logits);

/// True for calibrators that never change the predicted class.
bool preserves_accuracy(BaseKind kind);

}  // namespace dacal
