// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace beamfuse {

/// Comma-separated table with '#'-prefixed comment lines ahead of the header.
struct CsvTable {
  std::vector<std::string> comments;  // written as "# <text>"
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;  // throws ValueError if absent
  std::vector<double> numeric_column(const std::string& name) const;
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;
};

CsvTable parse_csv(const std::string& text);

/// Shortest round-trippable decimal form.
std::string format_number(double v);

}  // namespace beamfuse
