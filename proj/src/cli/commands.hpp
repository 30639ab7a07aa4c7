#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dacal/knn.hpp"
#include "dacal/manifest.hpp"
#include "dacal/metrics.hpp"
#include "dacal/pipeline.hpp"
#include "dacal/synth.hpp"

namespace dacal::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNotConverged = 4;

/// Where kNN indices come from: a directory written by build-index, or built
/// in memory from the manifest's train split. Overrides replace manifest
/// values.
struct IndexSource {
  std::optional<std::filesystem::path> index_dir;
  std::optional<int> k;
  std::optional<double> subsample;
  std::optional<std::uint64_t> seed;
};

struct RunContext {
  std::string command_line;
  int threads = 1;
  bool strict = false;
};

struct BuildIndexOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  IndexSource source;
};

struct FitOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::string method;  // empty: first manifest method
  IndexSource source;
};

struct CalibrateOptions {
  std::filesystem::path manifest;
  std::filesystem::path model;
  std::string split;
  std::filesystem::path out;
  IndexSource source;
};

struct EvaluateOptions {
  std::filesystem::path manifest;
  std::filesystem::path model;
  std::vector<std::string> splits;   // empty: manifest eval_splits
  std::vector<std::string> metrics;  // empty: all
  int bins = kDefaultBins;
  std::filesystem::path out;
  IndexSource source;
};

struct OodOptions {
  std::filesystem::path manifest;
  std::filesystem::path model;
  std::string in_split;   // empty: first eval split
  std::string ood_split;  // empty: manifest ood_split
  std::filesystem::path out;
  IndexSource source;
};

struct KSweepOptions {
  std::filesystem::path manifest;
  std::vector<int> ks{1, 10, 50, 100, 200};
  std::string method = "ts+dac";
  std::vector<std::string> splits;
  int bins = kDefaultBins;
  std::filesystem::path out;
  IndexSource source;
};

struct DataEfficiencyOptions {
  std::filesystem::path manifest;
  std::vector<double> fractions{0.1, 0.2, 0.5, 1.0};
  int repeats = 5;
  std::uint64_t seed = 0;
  std::string method = "ts+dac";
  std::vector<std::string> splits;
  int bins = kDefaultBins;
  std::filesystem::path out;
  IndexSource source;
};

struct ReportLayersOptions {
  std::filesystem::path model;
  std::filesystem::path out;
};

struct SynthOptions {
  SynthConfig config;
  std::filesystem::path out;
  int k = 50;
  std::vector<std::string> methods{"ts", "ts+dac"};
};

/// Metric names accepted by evaluate: ece, ece_em, cw_ece, brier, nll, accuracy.
const std::vector<std::string>& all_metric_names();
double compute_metric(const std::string& name, const DenseMatrix& probs, const LabelVector& labels,
                      int bins);

/// Indices for the manifest layers, in manifest order.
std::vector<KnnIndex> obtain_indices(const ExperimentManifest& manifest, const IndexSource& source);

/// Indices re-targeted to the layers and k values recorded in a DAC model.
std::vector<KnnIndex> indices_for_model(const DacModel& model, const std::vector<KnnIndex>& indices);

int cmd_build_index(const BuildIndexOptions& options, const RunContext& ctx);
int cmd_fit(const FitOptions& options, const RunContext& ctx);
int cmd_calibrate(const CalibrateOptions& options, const RunContext& ctx);
int cmd_evaluate(const EvaluateOptions& options, const RunContext& ctx);
int cmd_ood(const OodOptions& options, const RunContext& ctx);
int cmd_k_sweep(const KSweepOptions& options, const RunContext& ctx);
int cmd_data_efficiency(const DataEfficiencyOptions& options, const RunContext& ctx);
int cmd_report_layers(const ReportLayersOptions& options, const RunContext& ctx);
int cmd_synth(const SynthOptions& options, const RunContext& ctx);

/// Parses arguments, runs the subcommand and maps errors to exit codes.
int run(int argc, char** argv);

}  // namespace dacal::cli
