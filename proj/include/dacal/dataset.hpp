#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dacal/matrix.hpp"

namespace dacal {

struct LayerFeatures {
  std::string name;
  DenseMatrix features;
};

/// Labels, logits and per-layer embeddings of one split.
struct CalibrationDataset {
  std::string split_name;
  std::optional<LabelVector> labels;  // absent for unlabeled OOD data
  DenseMatrix logits;                 // N x C
  std::vector<LayerFeatures> layers;  // each N x D_l

  std::size_t size() const noexcept { return logits.rows(); }
  std::size_t num_classes() const noexcept { return logits.cols(); }

  /// Checks row counts, layer name uniqueness, finiteness and label range.
  /// Throws ShapeError, ConfigError or DataError.
  void validate() const;

  std::vector<std::string> layer_names() const;

  /// Throws ConfigError for an unknown layer.
  const DenseMatrix& layer(std::string_view name) const;

  /// Rows in the given order; labels and every layer are subset together.
  CalibrationDataset subset(std::span<const std::size_t> rows) const;

  /// Throws ConfigError when labels are absent.
  const LabelVector& require_labels() const;
};

}  // namespace dacal
