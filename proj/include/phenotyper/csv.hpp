#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace phenotyper {

// Shortest round-trip decimal rendering, identical on every run.
std::string format_double(double v);

// Minimal CSV: comma separator, RFC-style quoting for fields containing
// commas, quotes, or newlines. First row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace phenotyper
