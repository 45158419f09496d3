#include "cfm/datasets.hpp"
#include "cfm/error.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace cfm;

TEST_CASE("catalog") {
  CHECK(dataset_info("checkerboard").dim == 2);
  CHECK(dataset_info("torus").dim == 3);
  CHECK(dataset_info("point_mass").dim == 1);
  try {
    dataset_info("spiral");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "id");
    CHECK(std::string(e.what()).find("two_moons") != std::string::npos);
  }
}

TEST_CASE("every dataset is deterministic and inside its box") {
  for (const auto& info : dataset_catalog()) {
    const Mat a = generate_dataset(info.id, 5, 4000);
    const Mat b = generate_dataset(info.id, 5, 4000);
    CHECK(a == b);
    CHECK(a.cols() == info.dim);
    CHECK(a.cwiseAbs().maxCoeff() <= info.box);
    if (info.id != "point_mass") CHECK(generate_dataset(info.id, 6, 4000) != a);
  }
  CHECK(generate_dataset("sphere", 1, 0).rows() == 0);
}

TEST_CASE("checkerboard cells") {
  CHECK(checkerboard_on_cell(-0.9, -0.9));
  CHECK(!checkerboard_on_cell(-0.4, -0.9));
  CHECK(checkerboard_on_cell(-0.4, -0.4));
  CHECK(checkerboard_on_cell(0.9, 0.9));
  CHECK(!checkerboard_on_cell(0.9, 0.4));
  const Mat pts = generate_dataset("checkerboard", 1, 20000);
  CHECK(on_cell_fraction(pts) == 1.0);
  // All eight on-cells are populated roughly equally.
  int counts[4][4] = {};
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    ++counts[std::min(3, int((pts(i, 0) + 1) * 2))][std::min(3, int((pts(i, 1) + 1) * 2))];
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if ((i + j) % 2 == 0) CHECK(std::abs(counts[i][j] / 20000.0 - 0.125) < 0.01);
    }
  }
  CHECK_THROWS_AS(on_cell_fraction(Mat::Zero(3, 3)), ShapeError);
}

TEST_CASE("torus points satisfy the implicit equation") {
  const Mat pts = generate_dataset("torus", 2, 10000);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double ring = std::hypot(pts(i, 0), pts(i, 1)) - kTorusMajor;
    worst = std::max(worst, std::abs(ring * ring + pts(i, 2) * pts(i, 2) - kTorusMinor * kTorusMinor));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("sphere points have unit norm") {
  const Mat pts = generate_dataset("sphere", 3, 5000);
  CHECK((pts.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(pts.colwise().mean().norm() < 0.05);
}

TEST_CASE("two moons centroids") {
  const Eigen::Index n = 100000;
  const Mat pts = generate_dataset("two_moons", 4, n);
  const Vec outer = pts.topRows(n / 2).colwise().mean().transpose();
  const Vec inner = pts.bottomRows(n / 2).colwise().mean().transpose();
  const double arc = 2.0 / std::numbers::pi;
  CHECK(std::abs(outer[0] - (-1.0 / 3.0)) < 0.02);
  CHECK(std::abs(outer[1] - (arc - 0.25) / 0.75) < 0.02);
  CHECK(std::abs(inner[0] - 1.0 / 3.0) < 0.02);
  CHECK(std::abs(inner[1] - (0.25 - arc) / 0.75) < 0.02);
}

TEST_CASE("one-dimensional targets") {
  CHECK((generate_dataset("point_mass", 1, 10).array() == 2.0).all());
  const Mat tp = generate_dataset("two_point", 1, 10000);
  CHECK((tp.array().abs() == 1.0).all());
  CHECK(std::abs(tp.mean()) < 0.05);
}
