#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ptw::harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Connect points with a polyline; otherwise draw markers only.
  bool line = true;
};

/// Minimal SVG line/scatter chart with linear axes and a legend.
std::string svg_plot(const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series);

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series);

}  // namespace ptw::harness
