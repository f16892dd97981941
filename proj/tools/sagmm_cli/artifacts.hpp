// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sagmm::cli {

inline constexpr int kSchemaVersion = 1;

/// CSV writer that emits the schema comment line and a header row up front.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& cell(const std::string& v);
  CsvWriter& cell(double v);
  CsvWriter& cell(std::size_t v);
  void end_row();

 private:
  std::ofstream out_;
  bool first_ = true;
};

/// Hex SHA-1 of "blob <size>\0<bytes>", as git names file contents.
std::string git_blob_hash(const std::string& bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);
std::string sha1_hex(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace sagmm::cli
