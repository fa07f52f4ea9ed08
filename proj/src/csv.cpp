// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "beamfuse/error.hpp"

namespace beamfuse {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw ValueError("csv row has " + std::to_string(row.size()) + " cells, header has " +
                     std::to_string(header.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ValueError("csv has no column '" + name + "'");
}

std::vector<double> CsvTable::numeric_column(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    double v = 0;
    const auto& cell = row[c];
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
      throw DataError("csv column '" + name + "' holds non-numeric '" + cell + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string CsvTable::to_string() const {
  std::ostringstream out;
  for (const auto& c : comments) out << "# " << c << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

void CsvTable::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << to_string();
  if (!f) throw DataError("write failed: " + path.string());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  bool have_header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line.size() > 2 ? line.substr(2) : std::string{});
    } else if (!have_header) {
      t.header = split(line);
      have_header = true;
    } else {
      auto cells = split(line);
      if (cells.size() != t.header.size()) throw DataError("ragged csv row: " + line);
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw DataError("csv has no header row");
  return t;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace beamfuse
