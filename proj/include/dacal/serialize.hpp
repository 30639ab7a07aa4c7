#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dacal/pipeline.hpp"

namespace dacal {

// Models are stored as JSON with a fixed key order, so writing the same
// model twice yields identical bytes. Doubles are printed with enough digits
// to round-trip exactly.

std::string to_json(const CalibratorModel& model);
/// Throws ConfigError on malformed or inconsistent documents.
CalibratorModel calibrator_from_json(std::string_view text);

std::string to_json(const DacModel& model, const FitReport* report = nullptr);
DacModel dac_from_json(std::string_view text);

void save_model(const CalibratorModel& model, const std::filesystem::path& path);
/// Throws IoError if the file cannot be read, ConfigError if it does not parse.
CalibratorModel load_model(const std::filesystem::path& path);

/// Whole file as a string; throws IoError.
std::string read_text_file(const std::filesystem::path& path);
/// Truncates and writes; throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace dacal
