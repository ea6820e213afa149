#include "bnnrobust/harness/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>

namespace bnnrobust::harness {
namespace {

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

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
  double lo = 0.0;
  double hi = 1.0;
};

Range span(const std::vector<ScatterPoint>& points, double ScatterPoint::*field) {
  if (points.empty()) return {};
  Range r{points.front().*field, points.front().*field};
  for (const auto& p : points) {
    r.lo = std::min(r.lo, p.*field);
    r.hi = std::max(r.hi, p.*field);
  }
  if (r.lo == r.hi) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  return r;
}

}  // namespace

std::string emit_svg_scatter(const std::vector<ScatterPoint>& points, const ScatterAxes& axes) {
  const double m = axes.margin;
  const double x0 = m, x1 = axes.width - m;
  const double y0 = axes.height - m, y1 = m;
  const Range xr = span(points, &ScatterPoint::x);
  const Range yr = span(points, &ScatterPoint::y);
  auto px = [&](double x) { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  auto py = [&](double y) { return y0 - (y - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };

  std::vector<std::string> series;
  for (const auto& p : points) {
    if (std::find(series.begin(), series.end(), p.series) == series.end()) series.push_back(p.series);
  }
  auto colour = [&](const std::string& s) {
    const auto i = static_cast<std::size_t>(std::find(series.begin(), series.end(), s) - series.begin());
    return kPalette[i % kPalette.size()];
  };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" "
      "viewBox=\"0 0 {0:.0f} {1:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      axes.width, axes.height);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     axes.width / 2, m / 2, escape(axes.title));
  svg += fmt::format("<line class=\"axis\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n",
                     x0, y0, x1, y0);
  svg += fmt::format("<line class=\"axis\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n",
                     x0, y0, x0, y1);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", (x0 + x1) / 2,
                     axes.height - m / 4, escape(axes.x_label));
  svg += fmt::format(
      "<text x=\"{0:.2f}\" y=\"{1:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 {0:.2f} {1:.2f})\">{2}</text>\n",
      m / 4, (y0 + y1) / 2, escape(axes.y_label));
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"start\">{:.4g}</text>\n", x0, y0 + 16, xr.lo);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", x1, y0 + 16, xr.hi);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", x0 - 4, y0, yr.lo);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", x0 - 4, y1 + 8, yr.hi);

  for (const auto& p : points) {
    svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n", px(p.x),
                       py(p.y), colour(p.series));
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double ly = y1 + 16.0 * static_cast<double>(i);
    svg += fmt::format("<rect class=\"legend\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
                       x1 - 110, ly - 9, colour(series[i]));
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", x1 - 95, ly, escape(series[i]));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace bnnrobust::harness
