#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cli/reports.hpp"
#include "dacal/error.hpp"
#include "dacal/log.hpp"
#include "dacal/serialize.hpp"
#include "dacal/tensor_io.hpp"

namespace dacal::cli {
namespace {

using Json = nlohmann::ordered_json;

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const std::filesystem::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

MethodSpec method_or_default(const std::string& text, const ExperimentManifest& manifest) {
  if (!text.empty()) return MethodSpec::parse(text);
  if (!manifest.methods.empty()) return MethodSpec::parse(manifest.methods.front());
  return MethodSpec{};
}

// Returns the exit code for a finished fit: non-convergence is a warning,
// escalated under --strict.
int convergence_status(const CalibratorModel& model, const RunContext& ctx) {
  if (model.dac_report && !model.dac_report->converged) {
    log_warn("density scaler fit did not converge (" +
             std::to_string(model.dac_report->iterations) + " iterations)");
    if (ctx.strict) return kExitNotConverged;
  }
  return kExitOk;
}

std::vector<std::string> eval_splits(const std::vector<std::string>& requested,
                                     const ExperimentManifest& manifest) {
  const auto& splits = requested.empty() ? manifest.eval_splits : requested;
  if (splits.empty()) throw ConfigError("no evaluation splits given");
  for (const auto& s : splits) manifest.split(s);
  return splits;
}

DensityMatrix subset_densities(const DensityMatrix& d, std::span<const std::size_t> rows) {
  DensityMatrix out;
  out.values = d.values.select_rows(rows);
  out.layer_names = d.layer_names;
  out.k_per_layer = d.k_per_layer;
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double macro_ece(const CalibratorModel& model, const std::vector<CalibrationDataset>& splits,
                 const std::vector<DensityMatrix>& densities, int bins) {
  std::vector<double> per_split;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto probs = predict_proba_with_densities(model, splits[i].logits,
                                                    model.dac ? &densities[i] : nullptr);
    per_split.push_back(ece_equal_width(probs, splits[i].require_labels(), bins).ece);
  }
  return macro_average(per_split);
}

void write_reliability(const BinStats& stats, const std::filesystem::path& path) {
  CsvWriter csv({"bin", "lower", "upper", "count", "confidence", "accuracy"});
  for (std::size_t m = 0; m < stats.bins.size(); ++m) {
    const auto& b = stats.bins[m];
    csv.add({std::to_string(m + 1), format_number(b.lower), format_number(b.upper),
             std::to_string(b.count), format_number(b.mean_confidence), format_number(b.accuracy)});
  }
  csv.save(path);
}

Json confidence_summary(const std::vector<double>& scores) {
  Json j;
  j["count"] = scores.size();
  j["mean"] = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  j["min"] = *std::min_element(scores.begin(), scores.end());
  j["q1"] = quantile(scores, 0.25);
  j["median"] = quantile(scores, 0.5);
  j["q3"] = quantile(scores, 0.75);
  j["max"] = *std::max_element(scores.begin(), scores.end());
  return j;
}

}  // namespace

const std::vector<std::string>& all_metric_names() {
  static const std::vector<std::string> names{"ece", "ece_em", "cw_ece", "brier", "nll", "accuracy"};
  return names;
}

double compute_metric(const std::string& name, const DenseMatrix& probs, const LabelVector& labels,
                      int bins) {
  if (name == "ece") return ece_equal_width(probs, labels, bins).ece;
  if (name == "ece_em") return ece_equal_mass(probs, labels, bins).ece;
  if (name == "cw_ece") return classwise_ece(probs, labels, bins).total;
  if (name == "brier") return brier(probs, labels);
  if (name == "nll") return nll(probs, labels);
  if (name == "accuracy") return accuracy(probs, labels);
  throw ConfigError("unknown metric '" + name + "'");
}

std::vector<KnnIndex> obtain_indices(const ExperimentManifest& manifest, const IndexSource& source) {
  std::vector<KnnIndex> indices;
  if (source.index_dir) {
    for (const auto& name : manifest.layer_names()) {
      KnnIndex index = load_index(*source.index_dir, name);
      if (source.k && index.k() != *source.k) index = index.with_k(*source.k);
      indices.push_back(std::move(index));
    }
    return indices;
  }
  const CalibrationDataset train = manifest.load_split(manifest.train_split);
  const double fraction = source.subsample.value_or(manifest.subsample_fraction);
  const std::uint64_t seed = source.seed.value_or(manifest.seed);
  for (std::size_t l = 0; l < manifest.layers.size(); ++l) {
    const auto& name = manifest.layers[l].name;
    const int k = source.k.value_or(manifest.k_per_layer[l]);
    indices.push_back(KnnIndex::build(train.layer(name), name, k, fraction, seed));
  }
  return indices;
}

std::vector<KnnIndex> indices_for_model(const DacModel& model, const std::vector<KnnIndex>& indices) {
  std::vector<KnnIndex> out;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& name = model.layer_names()[l];
    const auto it = std::find_if(indices.begin(), indices.end(),
                                 [&](const KnnIndex& i) { return i.layer_name() == name; });
    if (it == indices.end()) throw ConfigError("no kNN index for model layer '" + name + "'");
    const int k = model.k_per_layer().empty() ? it->k() : model.k_per_layer()[l];
    out.push_back(k == it->k() ? *it : it->with_k(k));
  }
  return out;
}

int cmd_build_index(const BuildIndexOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  IndexSource source = options.source;
  source.index_dir.reset();
  const auto indices = obtain_indices(manifest, source);
  ensure_dir(options.out);
  for (const auto& index : indices) {
    save_index(index, options.out);
    log_info("index '" + index.layer_name() + "': " + std::to_string(index.reference().rows()) +
             " reference rows, k = " + std::to_string(index.k()));
  }
  write_run_metadata(metadata_path_for_dir(options.out), ctx.command_line, ctx.threads);
  return kExitOk;
}

int cmd_fit(const FitOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  const MethodSpec method = method_or_default(options.method, manifest);
  const CalibrationDataset val = manifest.load_split(manifest.val_split);
  std::vector<KnnIndex> indices;
  if (method.dac) indices = obtain_indices(manifest, options.source);
  const auto model = compose(method, val, indices);
  ensure_parent(options.out);
  save_model(model, options.out);
  write_run_metadata(metadata_path_for_file(options.out), ctx.command_line, ctx.threads);
  return convergence_status(model, ctx);
}

int cmd_calibrate(const CalibrateOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  const auto model = load_model(options.model);
  const CalibrationDataset data = manifest.load_split(options.split);
  std::vector<KnnIndex> indices;
  if (model.dac) indices = indices_for_model(*model.dac, obtain_indices(manifest, options.source));
  const DenseMatrix probs = predict_proba(model, data, indices);
  ensure_parent(options.out);
  save_tensor(probs, options.out);
  write_run_metadata(metadata_path_for_file(options.out), ctx.command_line, ctx.threads);
  return kExitOk;
}

int cmd_evaluate(const EvaluateOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  const auto model = load_model(options.model);
  const auto splits = eval_splits(options.splits, manifest);
  const auto& metrics = options.metrics.empty() ? all_metric_names() : options.metrics;
  for (const auto& m : metrics) {
    if (std::find(all_metric_names().begin(), all_metric_names().end(), m) == all_metric_names().end()) {
      throw ConfigError("unknown metric '" + m + "'");
    }
  }
  std::vector<KnnIndex> indices;
  if (model.dac) indices = indices_for_model(*model.dac, obtain_indices(manifest, options.source));

  ensure_dir(options.out / "reliability");
  CsvWriter csv({"split", "method", "metric", "value"});
  Json summary;
  summary["method"] = model.method.str();
  summary["bins"] = options.bins;
  summary["splits"] = Json::object();
  std::map<std::string, std::vector<double>> per_metric;
  for (const auto& name : splits) {
    const CalibrationDataset data = manifest.load_split(name);
    const LabelVector& labels = data.require_labels();
    const DenseMatrix probs = predict_proba(model, data, indices);
    Json row;
    for (const auto& metric : metrics) {
      const double v = compute_metric(metric, probs, labels, options.bins);
      csv.add({name, model.method.str(), metric, format_number(v)});
      row[metric] = v;
      per_metric[metric].push_back(v);
    }
    summary["splits"][name] = std::move(row);
    write_reliability(reliability_data(probs, labels, options.bins, BinScheme::equal_width),
                      options.out / "reliability" / (name + "_equal_width.csv"));
    if (probs.rows() >= static_cast<std::size_t>(options.bins)) {
      write_reliability(reliability_data(probs, labels, options.bins, BinScheme::equal_mass),
                        options.out / "reliability" / (name + "_equal_mass.csv"));
    }
  }
  Json macro;
  for (const auto& metric : metrics) macro[metric] = macro_average(per_metric[metric]);
  summary["macro"] = std::move(macro);
  csv.save(options.out / "metrics.csv");
  write_text_file(options.out / "summary.json", summary.dump(2) + "\n");
  write_run_metadata(metadata_path_for_dir(options.out), ctx.command_line, ctx.threads);
  return kExitOk;
}

int cmd_ood(const OodOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  const auto model = load_model(options.model);
  std::string in_split = options.in_split;
  if (in_split.empty()) {
    in_split = manifest.has_split("test") ? "test" : eval_splits({}, manifest).front();
  }
  std::string ood_split = options.ood_split;
  if (ood_split.empty()) {
    if (!manifest.ood_split) throw ConfigError("no OOD split given and none in the manifest");
    ood_split = *manifest.ood_split;
  }
  std::vector<KnnIndex> indices;
  if (model.dac) indices = indices_for_model(*model.dac, obtain_indices(manifest, options.source));

  OodScores scores;
  scores.in_scores = top_confidence(predict_proba(model, manifest.load_split(in_split), indices));
  scores.out_scores = top_confidence(predict_proba(model, manifest.load_split(ood_split), indices));

  const std::vector<std::pair<std::string, double>> values{
      {"fpr_at_95_tpr", fpr_at_tpr(scores, 0.95)},
      {"detection_error", detection_error(scores)},
      {"auroc", auroc(scores)},
      {"aupr_in", aupr(scores, PrPositive::in)},
      {"aupr_out", aupr(scores, PrPositive::out)},
  };
  ensure_dir(options.out);
  CsvWriter csv({"in_split", "ood_split", "method", "metric", "value"});
  Json j;
  j["method"] = model.method.str();
  j["in_split"] = in_split;
  j["ood_split"] = ood_split;
  for (const auto& [name, v] : values) {
    csv.add({in_split, ood_split, model.method.str(), name, format_number(v)});
    j["metrics"][name] = v;
  }
  j["confidence"]["in"] = confidence_summary(scores.in_scores);
  j["confidence"]["out"] = confidence_summary(scores.out_scores);
  csv.save(options.out / "ood.csv");
  write_text_file(options.out / "ood.json", j.dump(2) + "\n");
  write_run_metadata(metadata_path_for_dir(options.out), ctx.command_line, ctx.threads);
  return kExitOk;
}

int cmd_k_sweep(const KSweepOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  const MethodSpec method = MethodSpec::parse(options.method);
  if (!method.dac) throw ConfigError("k-sweep needs a '+dac' method");
  std::vector<int> ks = options.ks;
  if (ks.empty()) throw ConfigError("k-sweep needs at least one k");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() < 1) throw ConfigError("k values must be positive");

  IndexSource source = options.source;
  source.k = ks.back();
  const auto indices = obtain_indices(manifest, source);
  const auto names = eval_splits(options.splits, manifest);

  const CalibrationDataset val = manifest.load_split(manifest.val_split);
  const auto val_densities = density_profiles(val, indices, ks);
  std::vector<CalibrationDataset> splits;
  std::vector<std::vector<DensityMatrix>> split_densities;  // [split][k]
  for (const auto& name : names) {
    splits.push_back(manifest.load_split(name));
    split_densities.push_back(density_profiles(splits.back(), indices, ks));
  }

  const MethodSpec base_method{method.base, false};
  const auto base_model = compose_with_densities(base_method, val, nullptr);
  std::vector<double> base_ece;
  for (const auto& s : splits) {
    base_ece.push_back(ece_equal_width(apply_base(base_model.base, s.logits), s.require_labels(),
                                       options.bins).ece);
  }

  int status = kExitOk;
  CsvWriter csv({"k", "split", "method", "ece", "base_method", "base_ece"});
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const auto model = compose_with_densities(method, val, &val_densities[j]);
    status = std::max(status, convergence_status(model, ctx));
    std::vector<double> eces;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      const auto probs = predict_proba_with_densities(model, splits[i].logits, &split_densities[i][j]);
      eces.push_back(ece_equal_width(probs, splits[i].require_labels(), options.bins).ece);
      csv.add({std::to_string(ks[j]), names[i], method.str(), format_number(eces.back()),
               base_method.str(), format_number(base_ece[i])});
    }
    csv.add({std::to_string(ks[j]), "macro", method.str(), format_number(macro_average(eces)),
             base_method.str(), format_number(macro_average(base_ece))});
  }
  ensure_dir(options.out);
  csv.save(options.out / "k_sweep.csv");
  write_run_metadata(metadata_path_for_dir(options.out), ctx.command_line, ctx.threads);
  return status;
}

int cmd_data_efficiency(const DataEfficiencyOptions& options, const RunContext& ctx) {
  const auto manifest = ExperimentManifest::load(options.manifest);
  const MethodSpec method = MethodSpec::parse(options.method);
  if (options.fractions.empty()) throw ConfigError("data-efficiency needs at least one fraction");
  if (options.repeats < 1) throw ConfigError("repeats must be positive");
  const CalibrationDataset val = manifest.load_split(manifest.val_split);
  for (double f : options.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must be in (0, 1]");
    if (subsample_rows(val.size(), f, 0).size() < 2) {
      throw ConfigError("fraction " + format_number(f) + " leaves fewer than 2 validation samples");
    }
  }
  std::vector<KnnIndex> indices;
  if (method.dac) indices = obtain_indices(manifest, options.source);
  const auto names = eval_splits(options.splits, manifest);
  std::vector<CalibrationDataset> splits;
  std::vector<DensityMatrix> densities;
  for (const auto& name : names) {
    splits.push_back(manifest.load_split(name));
    if (method.dac) densities.push_back(density_profile_for(splits.back(), indices));
  }
  DensityMatrix val_densities;
  if (method.dac) val_densities = density_profile_for(val, indices);

  int status = kExitOk;
  CsvWriter runs({"fraction", "repeat", "seed", "val_samples", "method", "macro_ece"});
  CsvWriter summary({"fraction", "method", "repeats", "mean", "std", "min", "max"});
  for (double f : options.fractions) {
    std::vector<double> values;
    for (int r = 0; r < options.repeats; ++r) {
      const std::uint64_t seed = mix_seed(options.seed, static_cast<std::uint64_t>(r));
      const auto rows = subsample_rows(val.size(), f, seed);
      const CalibrationDataset sub = val.subset(rows);
      DensityMatrix sub_densities;
      if (method.dac) sub_densities = subset_densities(val_densities, rows);
      const auto model = compose_with_densities(method, sub, method.dac ? &sub_densities : nullptr);
      status = std::max(status, convergence_status(model, ctx));
      values.push_back(macro_ece(model, splits, densities, options.bins));
      runs.add({format_number(f), std::to_string(r), std::to_string(seed), std::to_string(rows.size()),
                method.str(), format_number(values.back())});
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    summary.add({format_number(f), method.str(), std::to_string(values.size()), format_number(mean),
                 format_number(sd), format_number(*std::min_element(values.begin(), values.end())),
                 format_number(*std::max_element(values.begin(), values.end()))});
  }
  ensure_dir(options.out);
  runs.save(options.out / "data_efficiency_runs.csv");
  summary.save(options.out / "data_efficiency.csv");
  write_run_metadata(metadata_path_for_dir(options.out), ctx.command_line, ctx.threads);
  return status;
}

int cmd_report_layers(const ReportLayersOptions& options, const RunContext& ctx) {
  const auto model = load_model(options.model);
  if (!model.dac) throw ConfigError("model '" + model.method.str() + "' has no density scaler");
  const DacModel& dac = *model.dac;
  const auto shares = weight_shares(dac);
  CsvWriter csv({"layer", "k", "weight", "share"});
  for (std::size_t l = 0; l < dac.num_layers(); ++l) {
    csv.add({dac.layer_names()[l], dac.k_per_layer().empty() ? "" : std::to_string(dac.k_per_layer()[l]),
             format_number(dac.weights()[l]), format_number(shares[l])});
  }
  csv.add({"bias", "", format_number(dac.bias()), format_number(shares.back())});
  ensure_parent(options.out);
  csv.save(options.out);
  write_run_metadata(metadata_path_for_file(options.out), ctx.command_line, ctx.threads);
  return kExitOk;
}

int cmd_synth(const SynthOptions& options, const RunContext& ctx) {
  const SynthConfig& config = options.config;
  config.validate();
  if (options.k < 1) throw ConfigError("k must be positive");
  const auto splits = generate(config);
  const auto layer_names = synth_layer_names(config);

  ExperimentManifest manifest;
  manifest.num_classes = config.num_classes;
  for (const auto& name : layer_names) manifest.layers.push_back({name, 1});
  manifest.k_per_layer.assign(layer_names.size(), options.k);
  manifest.seed = config.seed;
  manifest.methods = options.methods;
  for (std::size_t i = 0; i < config.shift_severities.size(); ++i) {
    manifest.eval_splits.push_back(shift_split_name(i));
  }
  manifest.ood_split = "ood";

  ensure_dir(options.out);
  Json severities = Json::object();
  for (const auto& [name, data] : splits) {
    ensure_dir(options.out / name);
    SplitPaths paths;
    paths.name = name;
    paths.logits = name + "/logits.dact";
    save_tensor(data.logits, options.out / paths.logits);
    if (data.labels) {
      paths.labels = name + "/labels.dact";
      save_labels(*data.labels, options.out / *paths.labels);
    }
    for (const auto& layer : data.layers) {
      paths.features[layer.name] = name + "/" + layer.name + ".dact";
      save_tensor(layer.features, options.out / paths.features[layer.name]);
    }
    manifest.splits.push_back(std::move(paths));
  }
  for (std::size_t i = 0; i < config.shift_severities.size(); ++i) {
    severities[shift_split_name(i)] = config.shift_severities[i];
  }
  manifest.save(options.out / "manifest.json");

  Json j;
  j["num_classes"] = config.num_classes;
  j["layer_dims"] = config.layer_dims;
  j["train_samples"] = config.train_samples;
  j["val_samples"] = config.val_samples;
  j["test_samples"] = config.test_samples;
  j["ood_samples"] = config.ood_samples;
  j["separation"] = config.separation;
  j["feature_offset"] = config.feature_offset;
  j["shift_severities"] = config.shift_severities;
  j["latent_scales"] = config.latent_scales;
  j["layer_noise"] = config.layer_noise;
  j["miscalibration_temperature"] = config.miscalibration_temperature;
  j["k_max"] = config.k_max;
  j["seed"] = config.seed;
  j["split_severity"] = std::move(severities);
  write_text_file(options.out / "synth_config.json", j.dump(2) + "\n");
  write_run_metadata(metadata_path_for_dir(options.out), ctx.command_line, ctx.threads);
  return kExitOk;
}

}  // namespace dacal::cli
