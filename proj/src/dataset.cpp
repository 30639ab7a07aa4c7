#include "dacal/dataset.hpp"

#include <set>

#include "dacal/error.hpp"

namespace dacal {

void CalibrationDataset::validate() const {
  const std::size_t n = logits.rows();
  if (labels && labels->size() != n) {
    throw ShapeError(split_name + ": " + std::to_string(labels->size()) + " labels for " +
                     std::to_string(n) + " logit rows");
  }
  if (labels && static_cast<std::size_t>(labels->num_classes()) != logits.cols()) {
    throw ShapeError(split_name + ": label class count differs from logit columns");
  }
  if (!all_finite(logits)) throw DataError(split_name + ": non-finite logits");
  std::set<std::string> seen;
  for (const auto& layer : layers) {
    if (!seen.insert(layer.name).second) {
      throw ConfigError(split_name + ": duplicate layer name '" + layer.name + "'");
    }
    if (layer.features.rows() != n) {
      throw ShapeError(split_name + ": layer '" + layer.name + "' has " +
                       std::to_string(layer.features.rows()) + " rows, expected " +
                       std::to_string(n));
    }
    if (!all_finite(layer.features)) {
      throw DataError(split_name + ": non-finite features in layer '" + layer.name + "'");
    }
  }
}

std::vector<std::string> CalibrationDataset::layer_names() const {
  std::vector<std::string> names;
  names.reserve(layers.size());
  for (const auto& l : layers) names.push_back(l.name);
  return names;
}

const DenseMatrix& CalibrationDataset::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l.features;
  }
  throw ConfigError(split_name + ": no layer named '" + std::string(name) + "'");
}

CalibrationDataset CalibrationDataset::subset(std::span<const std::size_t> rows) const {
  CalibrationDataset out;
  out.split_name = split_name;
  if (labels) out.labels = labels->select(rows);
  out.logits = logits.select_rows(rows);
  out.layers.reserve(layers.size());
  for (const auto& l : layers) out.layers.push_back({l.name, l.features.select_rows(rows)});
  return out;
}

const LabelVector& CalibrationDataset::require_labels() const {
  if (!labels) throw ConfigError(split_name + ": split has no labels");
  return *labels;
}

}  // namespace dacal
