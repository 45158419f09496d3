#include "cfm/datasets.hpp"

#include "cfm/error.hpp"
#include "cfm/rng.hpp"

#include <cmath>
#include <numbers>

namespace cfm {

const std::vector<DatasetInfo>& dataset_catalog() {
  static const std::vector<DatasetInfo> catalog = {
      {"checkerboard", 2, 1.0}, {"two_moons", 2, 1.25}, {"gaussians8", 2, 1.25}, {"torus", 3, 1.0},
      {"sphere", 3, 1.0},       {"point_mass", 1, 2.0}, {"two_point", 1, 1.0},
  };
  return catalog;
}

const DatasetInfo& dataset_info(std::string_view id) {
  std::string valid;
  for (const auto& d : dataset_catalog()) {
    if (d.id == id) return d;
    valid += (valid.empty() ? "" : ", ") + d.id;
  }
  throw ConfigError("id", "unknown dataset '" + std::string(id) + "' (valid: " + valid + ")");
}

bool checkerboard_on_cell(double x, double y) {
  if (!(x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0)) return false;
  const int i = std::min(3, static_cast<int>(std::floor((x + 1.0) * 2.0)));
  const int j = std::min(3, static_cast<int>(std::floor((y + 1.0) * 2.0)));
  return (i + j) % 2 == 0;
}

double on_cell_fraction(const Mat& points) {
  if (points.cols() != 2) throw ShapeError("on_cell_fraction: expects 2D points");
  if (points.rows() == 0) return 0.0;
  Eigen::Index on = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) on += checkerboard_on_cell(points(i, 0), points(i, 1)) ? 1 : 0;
  return static_cast<double>(on) / static_cast<double>(points.rows());
}

namespace {

double truncated_normal(Rng& rng, double limit) {
  for (;;) {
    const double z = rng.normal();
    if (std::abs(z) <= limit) return z;
  }
}

}  // namespace

Mat generate_dataset(std::string_view id, std::uint64_t seed, Eigen::Index n) {
  const DatasetInfo& info = dataset_info(id);
  if (n < 0) throw ConfigError("n", "must be nonnegative");
  Rng rng(seed, 0x64617461);
  Mat out(n, info.dim);
  const double pi = std::numbers::pi;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (info.id == "checkerboard") {
      const auto cell = rng.below(8);
      const int row = static_cast<int>(cell / 2);
      const int col = 2 * static_cast<int>(cell % 2) + (row % 2);
      out(i, 0) = -1.0 + 0.5 * (col + rng.uniform());
      out(i, 1) = -1.0 + 0.5 * (row + rng.uniform());
    } else if (info.id == "two_moons") {
      const double a = pi * rng.uniform();
      double x, y;
      if (i < n / 2) {
        x = std::cos(a);
        y = std::sin(a);
      } else {
        x = 1.0 - std::cos(a);
        y = 0.5 - std::sin(a);
      }
      x += kMoonsNoise * truncated_normal(rng, 3.0);
      y += kMoonsNoise * truncated_normal(rng, 3.0);
      out(i, 0) = (x - 0.5) / 1.5;
      out(i, 1) = (y - 0.25) / 0.75;
    } else if (info.id == "gaussians8") {
      const double a = 2.0 * pi * static_cast<double>(rng.below(8)) / 8.0;
      out(i, 0) = 0.8 * std::cos(a) + 0.08 * truncated_normal(rng, 4.0);
      out(i, 1) = 0.8 * std::sin(a) + 0.08 * truncated_normal(rng, 4.0);
    } else if (info.id == "torus") {
      double theta;
      for (;;) {
        theta = 2.0 * pi * rng.uniform();
        if (rng.uniform() * (kTorusMajor + kTorusMinor) <= kTorusMajor + kTorusMinor * std::cos(theta)) break;
      }
      const double phi = 2.0 * pi * rng.uniform();
      const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
      out(i, 0) = ring * std::cos(phi);
      out(i, 1) = ring * std::sin(phi);
      out(i, 2) = kTorusMinor * std::sin(theta);
    } else if (info.id == "sphere") {
      Eigen::Vector3d v;
      do {
        v << rng.normal(), rng.normal(), rng.normal();
      } while (v.norm() < 1e-12);
      out.row(i) = (v / v.norm()).transpose();
    } else if (info.id == "point_mass") {
      out(i, 0) = 2.0;
    } else {
      out(i, 0) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    }
  }
  return out;
}

}  // namespace cfm
