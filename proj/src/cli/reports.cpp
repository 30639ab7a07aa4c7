#include "cli/reports.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>

#include <nlohmann/json.hpp>

#include "dacal/error.hpp"
#include "dacal/serialize.hpp"

namespace dacal::cli {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  append(header);
}

void CsvWriter::add(std::vector<std::string> fields) {
  if (fields.size() != columns_) throw ConfigError("csv: row width differs from header");
  append(fields);
  ++rows_;
}

void CsvWriter::append(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) text_ += ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      text_ += f;
    } else {
      text_ += '"';
      for (char c : f) {
        if (c == '"') text_ += '"';
        text_ += c;
      }
      text_ += '"';
    }
  }
  text_ += '\n';
}

void CsvWriter::save(const std::filesystem::path& path) const { write_text_file(path, text_); }

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of empty data");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void write_run_metadata(const std::filesystem::path& path, std::string_view command,
                        int threads) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);
  nlohmann::ordered_json j;
  j["command"] = command;
  j["threads"] = threads;
  j["timestamp"] = stamp;
  write_text_file(path, j.dump(2) + "\n");
}

std::filesystem::path metadata_path_for_file(const std::filesystem::path& out) {
  auto p = out;
  p += ".meta.json";
  return p;
}

std::filesystem::path metadata_path_for_dir(const std::filesystem::path& dir) {
  return dir / "run_metadata.json";
}

}  // namespace dacal::cli
