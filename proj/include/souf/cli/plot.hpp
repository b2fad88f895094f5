#pragma once

#include <filesystem>
#include <vector>

namespace souf::cli {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional half-widths, same length as y
};

/// Line plot with markers, error bars and numeric tick labels, rasterized to PNG.
void write_line_plot(const std::filesystem::path& path, const Series& series, int width = 640,
                     int height = 400);

}  // namespace souf::cli
