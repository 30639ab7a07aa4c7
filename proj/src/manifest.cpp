#include "dacal/manifest.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "dacal/error.hpp"
#include "dacal/preprocess.hpp"
#include "dacal/serialize.hpp"
#include "dacal/tensor_io.hpp"

namespace dacal {
namespace {

using Json = nlohmann::ordered_json;

// Maps JSON keys back to source lines for error messages. nlohmann does not
// keep positions for parsed values, so the first occurrence of the quoted key
// after an optional anchor is used.
class Locator {
 public:
  Locator(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  std::size_t line_at(std::size_t offset) const {
    return 1 + static_cast<std::size_t>(
                   std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(
                                                                std::min(offset, text_.size())),
                              '\n'));
  }

  std::string where(std::string_view key, std::string_view anchor = {}) const {
    std::size_t from = 0;
    if (!anchor.empty()) {
      const auto a = text_.find("\"" + std::string(anchor) + "\"");
      if (a != std::string::npos) from = a;
    }
    std::size_t pos = key.empty() ? std::string::npos : text_.find("\"" + std::string(key) + "\"", from);
    if (pos == std::string::npos) pos = from;
    return source_ + ":" + std::to_string(line_at(pos)) + ": ";
  }

  [[noreturn]] void fail(std::string_view key, const std::string& message,
                         std::string_view anchor = {}) const {
    throw ConfigError(where(key, anchor) + message);
  }

  const std::string& source() const { return source_; }

 private:
  const std::string& text_;
  std::string source_;
};

template <typename T>
T get_as(const Json& j, const char* key, const Locator& loc, std::string_view anchor = {}) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    if (!j.contains(key)) loc.fail(anchor.empty() ? "" : anchor, std::string("missing '") + key + "'", anchor);
    loc.fail(key, std::string("'") + key + "' has the wrong type", anchor);
  }
}

}  // namespace

ExperimentManifest ExperimentManifest::parse(const std::string& text,
                                             const std::filesystem::path& base_dir,
                                             const std::string& source, bool check_files) {
  const Locator loc(text, source);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(loc.line_at(e.byte == 0 ? 0 : e.byte - 1)) +
                      ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) loc.fail("", "manifest must be a JSON object");

  ExperimentManifest m;
  m.base_dir = base_dir;
  m.source = source;
  m.num_classes = get_as<int>(j, "num_classes", loc);
  if (m.num_classes < 1) loc.fail("num_classes", "num_classes must be positive");

  if (!j.contains("layers") || !j["layers"].is_array()) loc.fail("layers", "'layers' must be an array");
  std::set<std::string> seen;
  for (const auto& item : j["layers"]) {
    LayerSpec layer;
    if (item.is_string()) {
      layer.name = item.get<std::string>();
    } else if (item.is_object() && item.contains("name") && item["name"].is_string()) {
      layer.name = item["name"].get<std::string>();
      if (item.contains("spatial")) {
        if (!item["spatial"].is_number_unsigned() || item["spatial"].get<std::size_t>() == 0) {
          loc.fail("spatial", "layer '" + layer.name + "': spatial must be a positive integer", layer.name);
        }
        layer.spatial = item["spatial"].get<std::size_t>();
      }
    } else {
      loc.fail("layers", "each layer must be a name or {\"name\": ..., \"spatial\": ...}");
    }
    if (!seen.insert(layer.name).second) loc.fail(layer.name, "duplicate layer '" + layer.name + "'", "layers");
    m.layers.push_back(std::move(layer));
  }

  if (j.contains("k_per_layer")) {
    m.k_per_layer = get_as<std::vector<int>>(j, "k_per_layer", loc);
    if (m.k_per_layer.size() != m.layers.size()) {
      loc.fail("k_per_layer", "k_per_layer needs one entry per layer");
    }
  } else {
    const int k = j.contains("k") ? get_as<int>(j, "k", loc) : 50;
    m.k_per_layer.assign(m.layers.size(), k);
  }
  for (int k : m.k_per_layer) {
    if (k < 1) loc.fail(j.contains("k") ? "k" : "k_per_layer", "k must be positive");
  }

  if (j.contains("subsample_fraction")) {
    m.subsample_fraction = get_as<double>(j, "subsample_fraction", loc);
    if (!(m.subsample_fraction > 0.0 && m.subsample_fraction <= 1.0)) {
      loc.fail("subsample_fraction", "subsample_fraction must be in (0, 1]");
    }
  }
  if (j.contains("seed")) m.seed = get_as<std::uint64_t>(j, "seed", loc);
  if (j.contains("methods")) {
    m.methods = get_as<std::vector<std::string>>(j, "methods", loc);
  }
  if (j.contains("train_split")) m.train_split = get_as<std::string>(j, "train_split", loc);
  if (j.contains("val_split")) m.val_split = get_as<std::string>(j, "val_split", loc);
  if (j.contains("ood_split")) m.ood_split = get_as<std::string>(j, "ood_split", loc);

  if (!j.contains("splits") || !j["splits"].is_object()) loc.fail("splits", "'splits' must be an object");
  for (const auto& [name, item] : j["splits"].items()) {
    SplitPaths sp;
    sp.name = name;
    if (!item.is_object()) loc.fail(name, "split '" + name + "' must be an object", "splits");
    sp.logits = get_as<std::string>(item, "logits", loc, name);
    if (item.contains("labels")) sp.labels = get_as<std::string>(item, "labels", loc, name);
    if (!item.contains("features") || !item["features"].is_object()) {
      loc.fail(name, "split '" + name + "': 'features' must map layer names to files", "splits");
    }
    for (const auto& [layer, path] : item["features"].items()) {
      if (!path.is_string()) loc.fail(layer, "split '" + name + "': feature path must be a string", name);
      sp.features.emplace(layer, path.get<std::string>());
    }
    for (const auto& layer : m.layers) {
      if (!sp.features.count(layer.name)) {
        loc.fail(name, "split '" + name + "' has no features for layer '" + layer.name + "'", "splits");
      }
    }
    for (const auto& [layer, path] : sp.features) {
      if (!seen.count(layer)) {
        loc.fail(layer, "split '" + name + "' lists unknown layer '" + layer + "'", name);
      }
    }
    m.splits.push_back(std::move(sp));
  }

  if (j.contains("eval_splits")) {
    m.eval_splits = get_as<std::vector<std::string>>(j, "eval_splits", loc);
  } else {
    for (const auto& sp : m.splits) {
      if (sp.name != m.train_split && sp.name != m.val_split &&
          (!m.ood_split || sp.name != *m.ood_split)) {
        m.eval_splits.push_back(sp.name);
      }
    }
  }
  auto require_split = [&](const std::string& name, const char* key) {
    if (!m.has_split(name)) loc.fail(key, "unknown split '" + name + "'");
  };
  require_split(m.train_split, "train_split");
  require_split(m.val_split, "val_split");
  if (m.ood_split) require_split(*m.ood_split, "ood_split");
  for (const auto& name : m.eval_splits) require_split(name, "eval_splits");
  for (const auto& name : {m.train_split, m.val_split}) {
    if (!m.split(name).labels) loc.fail(name, "split '" + name + "' needs labels", "splits");
  }

  if (check_files) {
    for (const auto& sp : m.splits) {
      auto check = [&](const std::string& path, const std::string& what) {
        if (!std::filesystem::exists(m.resolve(path))) {
          loc.fail(path, "split '" + sp.name + "': " + what + " file not found: " + m.resolve(path).string(),
                   sp.name);
        }
      };
      check(sp.logits, "logits");
      if (sp.labels) check(*sp.labels, "labels");
      for (const auto& [layer, path] : sp.features) check(path, "layer '" + layer + "'");
    }
  }
  return m;
}

ExperimentManifest ExperimentManifest::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read manifest: ") + e.what());
  }
  return parse(text, path.parent_path(), path.string());
}

std::string ExperimentManifest::to_json() const {
  Json j;
  j["num_classes"] = num_classes;
  j["layers"] = Json::array();
  for (const auto& layer : layers) {
    if (layer.spatial == 1) {
      j["layers"].push_back(layer.name);
    } else {
      j["layers"].push_back(Json{{"name", layer.name}, {"spatial", layer.spatial}});
    }
  }
  j["k_per_layer"] = k_per_layer;
  j["subsample_fraction"] = subsample_fraction;
  j["seed"] = seed;
  j["methods"] = methods;
  j["train_split"] = train_split;
  j["val_split"] = val_split;
  j["eval_splits"] = eval_splits;
  if (ood_split) j["ood_split"] = *ood_split;
  j["splits"] = Json::object();
  for (const auto& sp : splits) {
    Json s;
    s["logits"] = sp.logits;
    if (sp.labels) s["labels"] = *sp.labels;
    s["features"] = Json::object();
    for (const auto& layer : layers) s["features"][layer.name] = sp.features.at(layer.name);
    j["splits"][sp.name] = std::move(s);
  }
  return j.dump(2) + "\n";
}

void ExperimentManifest::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json());
}

std::vector<std::string> ExperimentManifest::layer_names() const {
  std::vector<std::string> names;
  for (const auto& layer : layers) names.push_back(layer.name);
  return names;
}

bool ExperimentManifest::has_split(const std::string& name) const {
  return std::any_of(splits.begin(), splits.end(), [&](const SplitPaths& s) { return s.name == name; });
}

const SplitPaths& ExperimentManifest::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ConfigError(source + ": unknown split '" + name + "'");
}

std::filesystem::path ExperimentManifest::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

CalibrationDataset ExperimentManifest::load_split(const std::string& name) const {
  const SplitPaths& sp = split(name);
  CalibrationDataset ds;
  ds.split_name = name;
  ds.logits = load_tensor(resolve(sp.logits));
  if (ds.logits.cols() != static_cast<std::size_t>(num_classes)) {
    throw ShapeError("split '" + name + "': logits have " + std::to_string(ds.logits.cols()) +
                     " columns, manifest says " + std::to_string(num_classes) + " classes");
  }
  if (sp.labels) {
    ds.labels = load_labels(resolve(*sp.labels), num_classes);
  } else if (name == train_split || name == val_split) {
    throw ConfigError(source + ": split '" + name + "' needs labels");
  }
  for (const auto& layer : layers) {
    DenseMatrix raw = load_tensor(resolve(sp.features.at(layer.name)));
    if (layer.spatial > 1) {
      if (raw.cols() % layer.spatial != 0) {
        throw ShapeError("split '" + name + "', layer '" + layer.name + "': " +
                         std::to_string(raw.cols()) + " columns not divisible by spatial size " +
                         std::to_string(layer.spatial));
      }
      raw = spatial_average(raw, raw.cols() / layer.spatial, layer.spatial);
    }
    ds.layers.push_back({layer.name, std::move(raw)});
  }
  ds.validate();
  return ds;
}

}  // namespace dacal
