#pragma once

#include <string>
#include <vector>

namespace bnnrobust::harness {

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string series;
};

struct ScatterAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
  double width = 640.0;
  double height = 480.0;
  double margin = 60.0;
};

/// Standalone SVG scatter plot, one colour per series (in order of first
/// appearance). Byte-identical for identical input. With no points the axes
/// span [0, 1].
std::string emit_svg_scatter(const std::vector<ScatterPoint>& points, const ScatterAxes& axes);

}  // namespace bnnrobust::harness
