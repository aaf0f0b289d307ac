#pragma once

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfode {

/// Output directory or file could not be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

/// Comma-separated file with a header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void write_row(const std::vector<std::string>& cells);
  // Flushes and reports write failures.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

/// Creates `dir` (and parents) and checks that it is writable.
void prepare_output_directory(const std::filesystem::path& dir);

/// Writes payload with a "metadata" block appended; everything that varies
/// between identical runs (timestamps, thread count, wall-clock) belongs there.
void write_json(const std::filesystem::path& path, nlohmann::json payload,
                const nlohmann::json& metadata);

/// ISO-8601 UTC timestamp.
std::string utc_timestamp();

}  // namespace pfode
