#include "pfode/output.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>

namespace pfode {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), end);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  write_row(header);
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
  if (!out_) throw IoError("write failed on '" + path_.string() + "'");
}

void CsvWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed on '" + path_.string() + "'");
  out_.close();
}

void prepare_output_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
  const auto probe = dir / ".pfode_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

void write_json(const std::filesystem::path& path, nlohmann::json payload,
                const nlohmann::json& metadata) {
  payload["metadata"] = metadata;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << payload.dump(2) << '\n';
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

}  // namespace pfode
