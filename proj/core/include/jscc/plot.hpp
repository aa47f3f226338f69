#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace jscc::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Static SVG line chart with axes, ticks and a legend. Non-finite points are skipped.
std::string to_svg(const Figure& figure);
void write_svg(const std::filesystem::path& path, const Figure& figure);

}  // namespace jscc::plot
