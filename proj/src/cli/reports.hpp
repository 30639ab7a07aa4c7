#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dacal::cli {

/// Shortest decimal that round-trips to the same double. Locale independent.
std::string format_number(double value);

/// Minimal CSV builder; fields containing separators or quotes are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add(std::vector<std::string> fields);
  std::size_t rows() const noexcept { return rows_; }
  std::string str() const { return text_; }
  void save(const std::filesystem::path& path) const;

 private:
  void append(const std::vector<std::string>& fields);
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

/// Linear-interpolated quantile (q in [0, 1]) of unsorted data.
double quantile(std::vector<double> values, double q);

/// Run metadata kept apart from the reports so that those stay byte-stable:
/// command line, thread count and a UTC timestamp.
void write_run_metadata(const std::filesystem::path& path, std::string_view command,
                        int threads);

/// `<out>.meta.json` for file outputs, `<dir>/run_metadata.json` for
/// directory outputs.
std::filesystem::path metadata_path_for_file(const std::filesystem::path& out);
std::filesystem::path metadata_path_for_dir(const std::filesystem::path& dir);

}  // namespace dacal::cli
