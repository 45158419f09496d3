#pragma once

// Toy data distributions. Every generator is deterministic in (seed, n) and
// keeps its samples inside a declared axis-aligned box.

#include "cfm/autodiff.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace cfm {

struct DatasetInfo {
  std::string id;
  int dim;
  double box;  // every coordinate lies in [-box, box]
};

// checkerboard, two_moons, gaussians8, torus, sphere, point_mass, two_point.
const std::vector<DatasetInfo>& dataset_catalog();
// Throws ConfigError("id") listing the valid ids.
const DatasetInfo& dataset_info(std::string_view id);

Mat generate_dataset(std::string_view id, std::uint64_t seed, Eigen::Index n);

// Torus geometry.
inline constexpr double kTorusMajor = 0.7;
inline constexpr double kTorusMinor = 0.25;

// Checkerboard: 4x4 cells over [-1, 1]^2, cell (i, j) is "on" when i + j is even.
bool checkerboard_on_cell(double x, double y);
double on_cell_fraction(const Mat& points);

// Two moons before noise: outer arc (cos a, sin a) and inner arc
// (1 - cos a, 0.5 - sin a), a in [0, pi], mapped by x' = (x - 0.5) / 1.5,
// y' = (y - 0.25) / 0.75.
inline constexpr double kMoonsNoise = 0.05;

}  // namespace cfm
