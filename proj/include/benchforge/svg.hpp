#pragma once

#include <string>
#include <utility>
#include <vector>

namespace benchforge {

struct ChartSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;
};

/// Line chart: one <polyline> per series with two or more points, a single
/// <circle> marker for one-point series. Output is deterministic.
std::string render_line_chart(const ChartSpec& chart);

std::string xml_escape(std::string_view s);

}  // namespace benchforge
