#pragma once

// Scatter plots as binary PPM (P6). 2D points fill one square panel over
// [-extent, extent]^2; 3D points get two panels side by side (x-y, x-z).

#include "cfm/autodiff.hpp"

#include <filesystem>
#include <string>

namespace cfm {

inline constexpr int kPlotPanel = 512;
inline constexpr double kPlotExtent = 1.5;

// Throws ShapeError unless points.cols() is 2 or 3.
std::string render_scatter_ppm(const Mat& points, int panel = kPlotPanel, double extent = kPlotExtent);
void write_scatter_ppm(const std::filesystem::path& path, const Mat& points);

// Pixel column/row of a coordinate pair inside a panel; -1 if outside.
int plot_pixel(double v, int panel, double extent);

}  // namespace cfm
