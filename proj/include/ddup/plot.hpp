// Minimal static SVG charts for run reports.

#pragma once

#include <string>
#include <vector>

namespace ddup::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
};

/// Polyline chart with markers and a legend. Non-finite points are skipped.
std::string line_chart(const Axes& axes, const std::vector<Series>& series);

/// Bar chart of bin counts over [lo, hi].
std::string histogram(const Axes& axes, const std::vector<double>& counts, double lo, double hi);

void write_file(const std::string& path, const std::string& contents);

}  // namespace ddup::plot
