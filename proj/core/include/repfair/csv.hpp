#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace repfair {

// Shortest-stable text for a double: 12 significant digits, "inf"/"nan"
// spelled out. Every CSV and chart in the project formats through this.
std::string format_number(double v);
double parse_number(const std::string& s);

// Minimal CSV table (no quoting; cells never contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  const std::string& cell(std::size_t row, const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace repfair
