#pragma once

#include <string>
#include <vector>

namespace gprar {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 400;
};

/// Polyline chart with axes, ticks and a legend. Output depends only on the
/// arguments, so identical data gives byte-identical files.
std::string line_chart(const PlotSpec& spec, const std::vector<PlotSeries>& series);

}  // namespace gprar
