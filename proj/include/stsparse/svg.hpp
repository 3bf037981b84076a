#ifndef STSPARSE_SVG_HPP
#define STSPARSE_SVG_HPP

#include <string>
#include <vector>

namespace stsparse {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  double width = 640;
  double height = 400;
};

/// Self-contained SVG line chart with axes, ticks and a legend.
std::string line_chart_svg(const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace stsparse

#endif  // STSPARSE_SVG_HPP
