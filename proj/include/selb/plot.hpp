#pragma once

#include <string>
#include <vector>

namespace selb {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_err;  // empty, or one symmetric error bar per point
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

// Self-contained SVG line chart: axes, ticks, one polyline per series, point
// markers, optional error bars, legend. Byte-deterministic for equal inputs
// (fixed canvas, palette, and %.2f coordinate formatting).
std::string render_line_plot(const PlotSpec& spec);

// render_line_plot + atomic write.
void write_line_plot(const std::string& path, const PlotSpec& spec);

}  // namespace selb
