#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nrf/tensor.hpp"

namespace nrf {

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

// Numeric CSV with an optional header row (detected when the first row does
// not parse as numbers).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace nrf
