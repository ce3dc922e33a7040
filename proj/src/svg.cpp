#include "gprar/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace gprar {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double d = std::max(1.0, std::abs(lo) * 0.1);
      lo -= d;
      hi += d;
    }
  }
};

}  // namespace

std::string line_chart(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
  if (spec.width < 200 || spec.height < 150) throw std::invalid_argument("line_chart: canvas too small");
  Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("line_chart: series '" + s.label + "' has x/y mismatch");
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.pad();
  yr.pad();

  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = spec.width - left - right;
  const double ph = spec.height - top - bottom;
  const auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double y) { return top + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(spec.title) + "</text>\n";
  svg += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) + "\" height=\"" + fixed(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    svg += "<line x1=\"" + fixed(px(xv)) + "\" y1=\"" + fixed(top + ph) + "\" x2=\"" + fixed(px(xv)) + "\" y2=\"" +
           fixed(top + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(top + ph + 18) + "\" text-anchor=\"middle\">" +
           tick_label(xv) + "</text>\n";
    svg += "<line x1=\"" + fixed(left - 5) + "\" y1=\"" + fixed(py(yv)) + "\" x2=\"" + fixed(left) + "\" y2=\"" +
           fixed(py(yv)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fixed(left - 8) + "\" y=\"" + fixed(py(yv) + 4) + "\" text-anchor=\"end\">" +
           tick_label(yv) + "</text>\n";
  }
  svg += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(spec.height - 10.0) + "\" text-anchor=\"middle\">" +
         escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fixed(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fixed(top + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    std::string points;
    for (std::size_t j = 0; j < s.x.size(); ++j) points += (j ? " " : "") + fixed(px(s.x[j])) + "," + fixed(py(s.y[j]));
    svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    for (std::size_t j = 0; j < s.x.size(); ++j)
      svg += "<circle cx=\"" + fixed(px(s.x[j])) + "\" cy=\"" + fixed(py(s.y[j])) + "\" r=\"3\" fill=\"" + color +
             "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    svg += "<line x1=\"" + fixed(left + pw + 12) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(left + pw + 32) +
           "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fixed(left + pw + 38) + "\" y=\"" + fixed(ly + 4) + "\">" + escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace gprar
