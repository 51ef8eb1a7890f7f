#include "benchforge/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "benchforge/util.hpp"

namespace benchforge {

namespace {

constexpr double kWidth = 800, kHeight = 450;
constexpr double kLeft = 80, kRight = 160, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  if (std::fabs(v) >= 1e6 || (v != 0 && std::fabs(v) < 1e-2)) std::snprintf(buf, sizeof buf, "%.3g", v);
  else std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_line_chart(const ChartSpec& chart) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = 0, ymax = -std::numeric_limits<double>::infinity();
  for (const auto& s : chart.series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymax)) ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"450\" viewBox=\"0 0 800 450\">\n";
  svg += "<rect width=\"800\" height=\"450\" fill=\"white\"/>\n";
  svg += "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         xml_escape(chart.title) + "</text>\n";
  // axes
  svg += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop + ph) + "\" x2=\"" + fixed(kLeft + pw) +
         "\" y2=\"" + fixed(kTop + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop) + "\" x2=\"" + fixed(kLeft) + "\" y2=\"" +
         fixed(kTop + ph) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = xmin + (xmax - xmin) * i / 4, yv = ymin + (ymax - ymin) * i / 4;
    svg += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(kTop + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(xv) +
           "</text>\n";
    svg += "<text x=\"" + fixed(kLeft - 6) + "\" y=\"" + fixed(py(yv) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(yv) +
           "</text>\n";
  }
  svg += "<text x=\"" + fixed(kLeft + pw / 2) + "\" y=\"" + fixed(kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         xml_escape(chart.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fixed(kTop + ph / 2) + "\" transform=\"rotate(-90 18 " +
         fixed(kTop + ph / 2) + ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         xml_escape(chart.y_label) + "</text>\n";

  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& s = chart.series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    if (s.points.size() == 1) {
      auto [x, y] = s.points.front();
      svg += "<circle cx=\"" + fixed(px(x)) + "\" cy=\"" + fixed(py(y)) + "\" r=\"4\" fill=\"" + colour +
             "\"><title>" + xml_escape(s.label) + "</title></circle>\n";
    } else if (s.points.size() > 1) {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"";
      for (std::size_t j = 0; j < s.points.size(); ++j) {
        if (j) svg += ' ';
        svg += fixed(px(s.points[j].first)) + "," + fixed(py(s.points[j].second));
      }
      svg += "\"><title>" + xml_escape(s.label) + "</title></polyline>\n";
    }
    double ly = kTop + 10 + 18 * static_cast<double>(i);
    svg += "<rect x=\"" + fixed(kWidth - kRight + 12) + "\" y=\"" + fixed(ly - 8) +
           "\" width=\"10\" height=\"10\" fill=\"" + colour + "\"/>\n";
    svg += "<text x=\"" + fixed(kWidth - kRight + 28) + "\" y=\"" + fixed(ly + 1) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace benchforge
