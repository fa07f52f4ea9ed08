// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "beamfuse/csv.hpp"

namespace beamfuse {

enum class ChartKind { line, bar };

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct Chart {
  ChartKind kind = ChartKind::line;
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Standalone SVG 1.1 document. Every data point is one element with
/// class="point" (a circle for line charts, a rect for bar charts); each
/// line series is one polyline. Throws ValueError when there is no data.
std::string emit_svg(const Chart& chart);

/// Groups rows by `series_column` (one series when empty) and plots
/// `y_column` against `x_column`.
Chart chart_from_csv(const CsvTable& table, ChartKind kind, const std::string& x_column,
                     const std::string& y_column, const std::string& series_column,
                     std::string title);

}  // namespace beamfuse
