#include "selb/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "selb/error.hpp"
#include "selb/serialize.hpp"

namespace selb {

namespace {

constexpr double kWidth = 640.0, kHeight = 440.0;
constexpr double kLeft = 70.0, kRight = 24.0, kTop = 44.0, kBottom = 56.0;
constexpr int kTicks = 5;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr std::size_t kPaletteSize = sizeof kPalette / sizeof kPalette[0];

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Keeps the mapping well-defined for flat or single-point data.
  void finalize(double pad_frac) {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    } else {
      double pad = (hi - lo) * pad_frac;
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

std::string render_line_plot(const PlotSpec& spec) {
  if (spec.series.empty()) fail(ErrorCode::bad_value, "plot: no series");
  for (const auto& s : spec.series) {
    if (s.x.empty()) fail(ErrorCode::bad_value, "plot: series \"" + s.label + "\" is empty");
    if (s.x.size() != s.y.size()) {
      fail(ErrorCode::count_mismatch, "plot: series \"" + s.label + "\" has " +
                                          std::to_string(s.x.size()) + " x values and " +
                                          std::to_string(s.y.size()) + " y values");
    }
    if (!s.y_err.empty() && s.y_err.size() != s.y.size()) {
      fail(ErrorCode::count_mismatch,
           "plot: series \"" + s.label + "\" error bars do not match point count");
    }
  }

  Range xr, yr;
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xr.include(s.x[i]);
      double e = s.y_err.empty() ? 0.0 : std::abs(s.y_err[i]);
      yr.include(s.y[i] - e);
      yr.include(s.y[i] + e);
    }
  }
  xr.finalize(0.04);
  yr.finalize(0.08);

  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight); };
  auto py = [&](double y) { return kHeight - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_tick(kWidth) +
         "\" height=\"" + fmt_tick(kHeight) + "\" viewBox=\"0 0 " + fmt_tick(kWidth) + " " +
         fmt_tick(kHeight) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt_tick(kWidth) + "\" height=\"" +
         fmt_tick(kHeight) + "\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">" +
         escape_xml(spec.title) + "</text>\n";

  // axes
  double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) + "\" y2=\"" +
         fmt(y0) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x0) + "\" y2=\"" +
         fmt(y1) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";

  for (int t = 0; t < kTicks; ++t) {
    double fx = xr.lo + (xr.hi - xr.lo) * t / (kTicks - 1);
    double fy = yr.lo + (yr.hi - yr.lo) * t / (kTicks - 1);
    double tx = px(fx), ty = py(fy);
    svg += "<line x1=\"" + fmt(tx) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(tx) + "\" y2=\"" +
           fmt(y0 + 5) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(tx) + "\" y=\"" + fmt(y0 + 20) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           escape_xml(fmt_tick(fx)) + "</text>\n";
    svg += "<line x1=\"" + fmt(x0 - 5) + "\" y1=\"" + fmt(ty) + "\" x2=\"" + fmt(x0) +
           "\" y2=\"" + fmt(ty) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(x0 - 9) + "\" y=\"" + fmt(ty + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           escape_xml(fmt_tick(fy)) + "</text>\n";
  }
  svg += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(kHeight - 14) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" +
         escape_xml(spec.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt((y0 + y1) / 2) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fmt((y0 + y1) / 2) + ")\">" + escape_xml(spec.y_label) + "</text>\n";

  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const PlotSeries& s = spec.series[si];
    const char* color = kPalette[si % kPaletteSize];

    if (!s.y_err.empty()) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (s.y_err[i] == 0.0) continue;
        double cx = px(s.x[i]);
        double top = py(s.y[i] + std::abs(s.y_err[i]));
        double bot = py(s.y[i] - std::abs(s.y_err[i]));
        svg += "<line x1=\"" + fmt(cx) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(cx) +
               "\" y2=\"" + fmt(bot) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
        svg += "<line x1=\"" + fmt(cx - 4) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(cx + 4) +
               "\" y2=\"" + fmt(top) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
        svg += "<line x1=\"" + fmt(cx - 4) + "\" y1=\"" + fmt(bot) + "\" x2=\"" + fmt(cx + 4) +
               "\" y2=\"" + fmt(bot) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
      }
    }

    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) svg += ' ';
      svg += fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    svg += "\"/>\n";

    for (std::size_t i = 0; i < s.x.size(); ++i) {
      svg += "<circle cx=\"" + fmt(px(s.x[i])) + "\" cy=\"" + fmt(py(s.y[i])) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
  }

  // legend, top-right corner of the plot area
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const char* color = kPalette[si % kPaletteSize];
    double ly = y1 + 14 + 16 * static_cast<double>(si);
    svg += "<line x1=\"" + fmt(x1 - 150) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
           fmt(x1 - 130) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(x1 - 124) + "\" y=\"" + fmt(ly) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + escape_xml(spec.series[si].label) +
           "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

void write_line_plot(const std::string& path, const PlotSpec& spec) {
  write_text_file(path, render_line_plot(spec));
}

}  // namespace selb
