#include "cfm/plot.hpp"

#include "cfm/csv.hpp"
#include "cfm/error.hpp"

#include <cmath>

namespace cfm {

int plot_pixel(double v, int panel, double extent) {
  if (!(v >= -extent && v <= extent)) return -1;
  return std::min(panel - 1, static_cast<int>(std::floor((v + extent) / (2.0 * extent) * panel)));
}

std::string render_scatter_ppm(const Mat& points, int panel, double extent) {
  if (points.cols() != 2 && points.cols() != 3) {
    throw ShapeError("plot: only 2D and 3D points are supported, got dimension " + std::to_string(points.cols()));
  }
  const int panels = points.cols() == 2 ? 1 : 2;
  const int width = panel * panels, height = panel;
  std::string img(static_cast<std::size_t>(width) * height * 3, static_cast<char>(255));
  auto set = [&](int px, int py, unsigned char v) {
    const std::size_t at = (static_cast<std::size_t>(py) * width + px) * 3;
    img[at] = img[at + 1] = img[at + 2] = static_cast<char>(v);
  };
  const int axis = plot_pixel(0.0, panel, extent);
  for (int p = 0; p < panels; ++p) {
    for (int k = 0; k < panel; ++k) {
      set(p * panel + axis, k, 200);
      set(p * panel + k, axis, 200);
    }
    if (p > 0) {
      for (int k = 0; k < panel; ++k) set(p * panel, k, 120);
    }
  }
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (int p = 0; p < panels; ++p) {
      const int px = plot_pixel(points(i, 0), panel, extent);
      const int py = plot_pixel(points(i, p == 0 ? 1 : 2), panel, extent);
      if (px < 0 || py < 0) continue;
      set(p * panel + px, panel - 1 - py, 0);
    }
  }
  return "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n" + img;
}

void write_scatter_ppm(const std::filesystem::path& path, const Mat& points) {
  write_text_file(path, render_scatter_ppm(points));
}

}  // namespace cfm
