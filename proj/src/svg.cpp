// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "beamfuse/error.hpp"

namespace beamfuse {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

}  // namespace

std::string emit_svg(const Chart& chart) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = 0, ymax = -std::numeric_limits<double>::infinity();
  std::vector<double> categories;
  std::size_t points = 0;
  for (const Series& s : chart.series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      categories.push_back(x);
      ++points;
    }
  }
  if (points == 0) throw ValueError("emit_svg: no data points");
  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;

  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto sy = [&](double y) { return kTop + plot_h * (1 - (y - ymin) / (ymax - ymin)); };
  auto sx = [&](double x) { return kLeft + plot_w * (x - xmin) / (xmax - xmin); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(chart.title) << "</text>\n"
    << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
    << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n"
    << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
    << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
    << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(chart.x_label) << "</text>\n"
    << "<text x=\"15\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" font-size=\"12\""
    << " transform=\"rotate(-90 15 " << kTop + plot_h / 2 << ")\">" << escape(chart.y_label)
    << "</text>\n"
    << "<text x=\"" << kLeft - 5 << "\" y=\"" << sy(ymax) + 4
    << "\" text-anchor=\"end\" font-size=\"10\">" << num(ymax) << "</text>\n"
    << "<text x=\"" << kLeft - 5 << "\" y=\"" << sy(ymin) + 4
    << "\" text-anchor=\"end\" font-size=\"10\">" << num(ymin) << "</text>\n";

  const std::size_t nseries = chart.series.size();
  if (chart.kind == ChartKind::line) {
    o << "<text x=\"" << kLeft << "\" y=\"" << kTop + plot_h + 15
      << "\" text-anchor=\"middle\" font-size=\"10\">" << num(xmin) << "</text>\n"
      << "<text x=\"" << kLeft + plot_w << "\" y=\"" << kTop + plot_h + 15
      << "\" text-anchor=\"middle\" font-size=\"10\">" << num(xmax) << "</text>\n";
  } else {
    const double slot = plot_w / static_cast<double>(categories.size());
    for (std::size_t c = 0; c < categories.size(); ++c) {
      o << "<text x=\"" << kLeft + slot * (c + 0.5) << "\" y=\"" << kTop + plot_h + 15
        << "\" text-anchor=\"middle\" font-size=\"10\">" << num(categories[c]) << "</text>\n";
    }
  }

  for (std::size_t si = 0; si < nseries; ++si) {
    const Series& s = chart.series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    o << "<g class=\"series\" data-name=\"" << escape(s.name) << "\">\n";
    if (chart.kind == ChartKind::line) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i) {
        o << (i ? " " : "") << sx(s.points[i].first) << ',' << sy(s.points[i].second);
      }
      o << "\"/>\n";
      for (const auto& [x, y] : s.points) {
        o << "<circle class=\"point\" cx=\"" << sx(x) << "\" cy=\"" << sy(y)
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
    } else {
      const double slot = plot_w / static_cast<double>(categories.size());
      const double bar = slot * 0.8 / static_cast<double>(nseries);
      for (const auto& [x, y] : s.points) {
        const auto c = static_cast<double>(
            std::lower_bound(categories.begin(), categories.end(), x) - categories.begin());
        const double left = kLeft + slot * c + slot * 0.1 + bar * static_cast<double>(si);
        const double top = std::min(sy(y), sy(0)), h = std::abs(sy(y) - sy(0));
        o << "<rect class=\"point\" x=\"" << left << "\" y=\"" << top << "\" width=\"" << bar
          << "\" height=\"" << h << "\" fill=\"" << color << "\"/>\n";
      }
    }
    o << "</g>\n";
    const double ly = kTop + 15 * static_cast<double>(si);
    o << "<rect x=\"" << kWidth - kRight + 10 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/>\n"
      << "<text x=\"" << kWidth - kRight + 25 << "\" y=\"" << ly + 9 << "\" font-size=\"11\">"
      << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

Chart chart_from_csv(const CsvTable& table, ChartKind kind, const std::string& x_column,
                     const std::string& y_column, const std::string& series_column,
                     std::string title) {
  const std::vector<double> xs = table.numeric_column(x_column);
  const std::vector<double> ys = table.numeric_column(y_column);
  Chart chart;
  chart.kind = kind;
  chart.title = std::move(title);
  chart.x_label = x_column;
  chart.y_label = y_column;
  std::map<std::string, std::size_t> index;
  const bool grouped = !series_column.empty();
  const std::size_t sc = grouped ? table.column(series_column) : 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string name = grouped ? table.rows[r][sc] : y_column;
    auto it = index.find(name);
    if (it == index.end()) {
      it = index.emplace(name, chart.series.size()).first;
      chart.series.push_back({name, {}});
    }
    chart.series[it->second].points.emplace_back(xs[r], ys[r]);
  }
  return chart;
}

}  // namespace beamfuse
