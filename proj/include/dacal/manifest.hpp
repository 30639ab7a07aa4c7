#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dacal/dataset.hpp"

namespace dacal {

/// One feature layer. Features stored as [N x (channels * spatial)] are
/// averaged over the spatial axis on load; spatial = 1 means already pooled.
struct LayerSpec {
  std::string name;
  std::size_t spatial = 1;
};

/// Tensor files of one split, as written in the manifest (relative paths are
/// resolved against the manifest directory).
struct SplitPaths {
  std::string name;
  std::string logits;
  std::optional<std::string> labels;
  std::map<std::string, std::string> features;  // layer name -> path
};

/// Experiment description:
///
///   {
///     "num_classes": 10,
///     "layers": ["layer1", {"name": "layer2", "spatial": 16}],
///     "k_per_layer": [50, 50],          // or "k": 50 for every layer
///     "subsample_fraction": 1.0,        // optional, default 1
///     "seed": 0,                        // optional, default 0
///     "methods": ["ts", "ts+dac"],      // optional
///     "train_split": "train",           // optional, default "train"
///     "val_split": "val",               // optional, default "val"
///     "eval_splits": ["test", ...],     // optional, default: all others
///     "ood_split": "ood",               // optional
///     "splits": {
///       "train": {"logits": "train/logits.dact", "labels": "train/labels.dact",
///                 "features": {"layer1": "train/layer1.dact", ...}},
///       ...
///     }
///   }
///
/// Errors are ConfigError with "<file>:<line>:" context.
struct ExperimentManifest {
  std::filesystem::path base_dir;
  std::string source = "<manifest>";

  int num_classes = 0;
  std::vector<LayerSpec> layers;
  std::vector<int> k_per_layer;
  double subsample_fraction = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> methods;
  std::string train_split = "train";
  std::string val_split = "val";
  std::vector<std::string> eval_splits;
  std::optional<std::string> ood_split;
  std::vector<SplitPaths> splits;

  static ExperimentManifest load(const std::filesystem::path& path);
  /// With `check_files`, every referenced tensor file must exist.
  static ExperimentManifest parse(const std::string& text, const std::filesystem::path& base_dir,
                                  const std::string& source = "<manifest>",
                                  bool check_files = true);

  /// Deterministic JSON with paths as stored.
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

  std::vector<std::string> layer_names() const;
  bool has_split(const std::string& name) const;
  /// Throws ConfigError for an unknown split.
  const SplitPaths& split(const std::string& name) const;
  std::filesystem::path resolve(const std::string& path) const;

  /// Loads and validates one split with pooled features for every layer.
  /// Labels are optional only for the OOD split.
  CalibrationDataset load_split(const std::string& name) const;
};

}  // namespace dacal
