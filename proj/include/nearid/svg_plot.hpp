// Minimal deterministic SVG line charts.  Every coordinate and label is
// formatted with fixed printf patterns, so identical inputs produce
// byte-identical SVG — the property the experiment outputs are held to.
#pragma once

#include <string>
#include <vector>

namespace nearid {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 720;
  int height = 480;
};

// Render series as polylines with axes, ticks, and a legend (when more than
// one series is present).  Log axes require strictly positive data on that
// axis; violations throw std::invalid_argument, as do empty inputs.
std::string render_line_plot(const std::vector<PlotSeries>& series,
                             const PlotOptions& options);

}  // namespace nearid
