#include "nearid/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace nearid {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// Pixel coordinates rounded to 1/100 px: stable and plenty for display.
std::string px(double v) { return fmt("%.2f", v); }

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

struct Axis {
  double lo = 0.0, hi = 1.0;  // in plot space (log10 applied when log scale)
  bool log = false;

  double to_unit(double v) const {
    const double t = log ? std::log10(v) : v;
    return (t - lo) / (hi - lo);
  }
};

// Tick positions in data space.  Linear axes use a 1-2-5 ladder; log axes
// use decades, thinned when the span is wide and refined with 2x/5x
// sub-ticks when it is narrow.
std::vector<double> make_ticks(const Axis& ax) {
  std::vector<double> ticks;
  if (!ax.log) {
    const double range = ax.hi - ax.lo;
    double step = std::pow(10.0, std::floor(std::log10(range / 4.0)));
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
      if (range / (step * mult) <= 6.0) {
        step *= mult;
        break;
      }
    }
    const double start = std::ceil(ax.lo / step - 1e-9) * step;
    for (double t = start; t <= ax.hi + 1e-9 * range; t += step) {
      ticks.push_back(t == 0.0 ? 0.0 : t);  // normalize -0
    }
    return ticks;
  }
  const int d0 = static_cast<int>(std::floor(ax.lo + 1e-9));
  const int d1 = static_cast<int>(std::ceil(ax.hi - 1e-9));
  const int span = d1 - d0;
  if (span >= 2) {
    const int stride = span > 8 ? (span + 5) / 6 : 1;
    for (int d = d0; d <= d1; d += stride) ticks.push_back(std::pow(10.0, d));
  } else {
    for (int d = d0 - 1; d <= d1; ++d) {
      for (double m : {1.0, 2.0, 5.0}) {
        const double v = m * std::pow(10.0, d);
        const double t = std::log10(v);
        if (t >= ax.lo - 1e-9 && t <= ax.hi + 1e-9) ticks.push_back(v);
      }
    }
  }
  return ticks;
}

Axis fit_axis(const std::vector<PlotSeries>& series, bool take_x, bool log) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    const auto& v = take_x ? s.x : s.y;
    for (double t : v) {
      if (!std::isfinite(t)) throw std::invalid_argument("plot: non-finite data");
      if (log && t <= 0.0) {
        throw std::invalid_argument("plot: log axis requires positive data");
      }
      const double u = log ? std::log10(t) : t;
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
  }
  if (!(lo <= hi)) throw std::invalid_argument("plot: no data points");
  if (hi - lo < 1e-12) {  // flat data: open up a symmetric window
    const double pad = log ? 0.5 : (std::abs(hi) > 0 ? 0.1 * std::abs(hi) : 1.0);
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  Axis ax;
  ax.lo = lo;
  ax.hi = hi;
  ax.log = log;
  return ax;
}

}  // namespace

std::string render_line_plot(const std::vector<PlotSeries>& series,
                             const PlotOptions& options) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("plot: series x/y length mismatch");
    }
    if (s.x.empty()) throw std::invalid_argument("plot: empty series");
  }

  const double W = options.width, H = options.height;
  const double ml = 70, mr = 18, mt = options.title.empty() ? 16 : 34, mb = 48;
  const double pw = W - ml - mr, ph = H - mt - mb;

  const Axis xa = fit_axis(series, true, options.log_x);
  const Axis ya = fit_axis(series, false, options.log_y);
  auto xpix = [&](double v) { return ml + xa.to_unit(v) * pw; };
  auto ypix = [&](double v) { return mt + (1.0 - ya.to_unit(v)) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(options.width) + "\" height=\"" +
         std::to_string(options.height) + "\" viewBox=\"0 0 " +
         std::to_string(options.width) + " " + std::to_string(options.height) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!options.title.empty()) {
    svg += "<text x=\"" + px(W / 2) +
           "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\" fill=\"#111111\">" +
           escape_xml(options.title) + "</text>\n";
  }

  // Grid and ticks.
  for (double t : make_ticks(xa)) {
    const double x = xpix(t);
    svg += "<line x1=\"" + px(x) + "\" y1=\"" + px(mt) + "\" x2=\"" + px(x) +
           "\" y2=\"" + px(mt + ph) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + px(x) + "\" y=\"" + px(mt + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#333333\">" +
           fmt("%g", t) + "</text>\n";
  }
  for (double t : make_ticks(ya)) {
    const double y = ypix(t);
    svg += "<line x1=\"" + px(ml) + "\" y1=\"" + px(y) + "\" x2=\"" + px(ml + pw) +
           "\" y2=\"" + px(y) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + px(ml - 6) + "\" y=\"" + px(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#333333\">" +
           fmt("%g", t) + "</text>\n";
  }
  // Axes frame.
  svg += "<rect x=\"" + px(ml) + "\" y=\"" + px(mt) + "\" width=\"" + px(pw) +
         "\" height=\"" + px(ph) +
         "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";

  // Axis labels.
  if (!options.x_label.empty()) {
    svg += "<text x=\"" + px(ml + pw / 2) + "\" y=\"" + px(H - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"#111111\">" +
           escape_xml(options.x_label) + "</text>\n";
  }
  if (!options.y_label.empty()) {
    svg += "<text x=\"16\" y=\"" + px(mt + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"#111111\" transform=\"rotate(-90 16 " +
           px(mt + ph / 2) + ")\">" +
           escape_xml(options.y_label) + "</text>\n";
  }

  // Series polylines with point markers.
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    std::string pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!pts.empty()) pts += ' ';
      pts += px(xpix(series[s].x[i])) + "," + px(ypix(series[s].y[i]));
    }
    svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.8\"/>\n";
    if (series[s].x.size() <= 200) {
      for (std::size_t i = 0; i < series[s].x.size(); ++i) {
        svg += "<circle cx=\"" + px(xpix(series[s].x[i])) + "\" cy=\"" +
               px(ypix(series[s].y[i])) + "\" r=\"2.4\" fill=\"" + color + "\"/>\n";
      }
    }
  }

  // Legend (multi-series only).
  if (series.size() > 1) {
    const double lx = ml + pw - 160, ly = mt + 10;
    svg += "<rect x=\"" + px(lx - 8) + "\" y=\"" + px(ly - 12) +
           "\" width=\"160\" height=\"" + px(series.size() * 18.0 + 8) +
           "\" fill=\"#ffffff\" fill-opacity=\"0.85\" stroke=\"#cccccc\"/>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double yy = ly + 18.0 * static_cast<double>(s);
      const char* color = kPalette[s % kPaletteSize];
      svg += "<line x1=\"" + px(lx) + "\" y1=\"" + px(yy) + "\" x2=\"" +
             px(lx + 22) + "\" y2=\"" + px(yy) + "\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + px(lx + 28) + "\" y=\"" + px(yy + 4) +
             "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#111111\">" +
             escape_xml(series[s].label) + "</text>\n";
    }
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace nearid
