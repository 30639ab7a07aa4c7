#include "dacal/serialize.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dacal/error.hpp"

namespace dacal {
namespace {

using Json = nlohmann::ordered_json;

constexpr int kModelFormatVersion = 1;

Json map_json(const IsotonicMap& map) {
  Json j;
  j["breakpoints"] = map.breakpoints();
  j["values"] = map.values();
  return j;
}

IsotonicMap map_from(const Json& j) {
  return IsotonicMap(j.at("breakpoints").get<std::vector<double>>(),
                     j.at("values").get<std::vector<double>>());
}

Json report_json(const FitReport& r) {
  Json j;
  j["final_loss"] = r.final_loss;
  j["initial_loss"] = r.initial_loss;
  j["iterations"] = r.iterations;
  j["initial_bias"] = r.initial_bias;
  j["converged"] = r.converged;
  j["weight_shares"] = r.weight_shares;
  return j;
}

FitReport report_from(const Json& j) {
  FitReport r;
  r.final_loss = j.at("final_loss").get<double>();
  r.initial_loss = j.at("initial_loss").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.initial_bias = j.at("initial_bias").get<double>();
  r.converged = j.at("converged").get<bool>();
  r.weight_shares = j.at("weight_shares").get<std::vector<double>>();
  return r;
}

Json dac_json(const DacModel& m, const FitReport* report) {
  Json j;
  j["layer_names"] = m.layer_names();
  j["weights"] = m.weights();
  j["bias"] = m.bias();
  j["k_per_layer"] = m.k_per_layer();
  j["index_checksums"] = m.index_checksums();
  if (report) j["fit_report"] = report_json(*report);
  return j;
}

DacModel dac_from(const Json& j) {
  DacModel m(j.at("layer_names").get<std::vector<std::string>>(),
             j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(),
             j.value("k_per_layer", std::vector<int>{}));
  m.set_index_checksums(j.value("index_checksums", std::vector<std::string>{}));
  return m;
}

Json base_json(const BaseModel& base) {
  Json j;
  if (std::holds_alternative<std::monostate>(base)) {
    j["kind"] = "none";
  } else if (const auto* ts = std::get_if<TempScaler>(&base)) {
    j["kind"] = "ts";
    j["temperature"] = ts->temperature;
  } else if (const auto* ets = std::get_if<EtsModel>(&base)) {
    j["kind"] = "ets";
    j["temperature"] = ets->temperature;
    j["mix_weights"] = ets->mix_weights;
  } else if (const auto* irm = std::get_if<IsotonicMap>(&base)) {
    j["kind"] = "irm";
    j["map"] = map_json(*irm);
  } else if (const auto* ir = std::get_if<OvaIsotonic>(&base)) {
    j["kind"] = "ir";
    j["maps"] = Json::array();
    for (const auto& m : ir->maps) j["maps"].push_back(map_json(m));
  }
  return j;
}

BaseModel base_from(const Json& j, BaseKind expected) {
  const auto kind = MethodSpec::parse(j.at("kind").get<std::string>()).base;
  if (kind != expected) throw ConfigError("model file: base kind disagrees with method");
  switch (kind) {
    case BaseKind::none: return std::monostate{};
    case BaseKind::ts: {
      const double t = j.at("temperature").get<double>();
      if (!(t >= kMinTemperature && t <= kMaxTemperature)) {
        throw ConfigError("model file: temperature out of range");
      }
      return TempScaler{t};
    }
    case BaseKind::ets: {
      EtsModel m;
      m.temperature = j.at("temperature").get<double>();
      m.mix_weights = j.at("mix_weights").get<std::array<double, 3>>();
      return m;
    }
    case BaseKind::irm: return map_from(j.at("map"));
    case BaseKind::ir: {
      OvaIsotonic m;
      for (const auto& item : j.at("maps")) m.maps.push_back(map_from(item));
      return m;
    }
  }
  throw ConfigError("model file: unknown base kind");
}

Json parse(std::string_view text, const char* what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string to_json(const CalibratorModel& model) {
  Json j;
  j["format"] = "dacal-model";
  j["version"] = kModelFormatVersion;
  j["method"] = model.method.str();
  j["base"] = base_json(model.base);
  if (model.dac) {
    j["dac"] = dac_json(*model.dac, model.dac_report ? &*model.dac_report : nullptr);
  }
  return j.dump(2) + "\n";
}

CalibratorModel calibrator_from_json(std::string_view text) {
  const Json j = parse(text, "model file");
  try {
    if (j.at("format").get<std::string>() != "dacal-model") {
      throw ConfigError("model file: not a dacal model");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ConfigError("model file: unsupported version");
    }
    CalibratorModel model;
    model.method = MethodSpec::parse(j.at("method").get<std::string>());
    model.base = base_from(j.at("base"), model.method.base);
    if (model.method.dac) {
      const Json& d = j.at("dac");
      model.dac = dac_from(d);
      if (d.contains("fit_report")) model.dac_report = report_from(d.at("fit_report"));
    } else if (j.contains("dac")) {
      throw ConfigError("model file: density scaler present but method has no '+dac'");
    }
    return model;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }
}

std::string to_json(const DacModel& model, const FitReport* report) {
  return dac_json(model, report).dump(2) + "\n";
}

DacModel dac_from_json(std::string_view text) {
  const Json j = parse(text, "density scaler");
  try {
    return dac_from(j);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("density scaler: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void save_model(const CalibratorModel& model, const std::filesystem::path& path) {
  write_text_file(path, to_json(model));
}

CalibratorModel load_model(const std::filesystem::path& path) {
  return calibrator_from_json(read_text_file(path));
}

}  // namespace dacal
