#include "cfm/csv.hpp"
#include "cfm/datasets.hpp"
#include "cfm/error.hpp"
#include "cfm/plot.hpp"
#include "cfm/rng.hpp"

#include <doctest.h>

#include <filesystem>

using namespace cfm;

TEST_CASE("csv round-trip is exact") {
  Rng rng(1);
  Mat m(17, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * 1e3;
  m(0, 0) = 0.1 + 0.2;
  m(1, 1) = -0.0;
  const std::string text = format_points_csv(m);
  CHECK(text.starts_with("x0,x1,x2\n"));
  CHECK(parse_points_csv(text) == m);
}

TEST_CASE("csv edge cases") {
  const Mat empty(0, 2);
  const std::string text = format_points_csv(empty);
  CHECK(text == "x0,x1\n");
  const Mat back = parse_points_csv(text);
  CHECK(back.rows() == 0);
  CHECK(back.cols() == 2);
  CHECK(parse_points_csv("x0\r\n1.5\r\n\r\n2\r\n").rows() == 2);
  CHECK_THROWS_AS(parse_points_csv(""), IoError);
  CHECK_THROWS_AS(parse_points_csv("x0,x1\n1,2\n3\n"), IoError);
  CHECK_THROWS_AS(parse_points_csv("x0,x1\n1,abc\n"), IoError);
}

TEST_CASE("csv files") {
  const auto dir = std::filesystem::temp_directory_path() / "cfm_test_csv" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  const Mat m = generate_dataset("two_moons", 1, 10);
  write_points_csv(dir / "p.csv", m);
  CHECK(read_points_csv(dir / "p.csv") == m);
  CHECK_THROWS_AS(read_points_csv(dir / "missing.csv"), IoError);
  std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("scatter plot layout") {
  CHECK(plot_pixel(-1.5, 512, 1.5) == 0);
  CHECK(plot_pixel(1.5, 512, 1.5) == 511);
  CHECK(plot_pixel(0.0, 512, 1.5) == 256);
  CHECK(plot_pixel(1.6, 512, 1.5) == -1);
  const std::string two = render_scatter_ppm(generate_dataset("two_moons", 1, 100));
  CHECK(two.starts_with("P6\n512 512\n255\n"));
  CHECK(two.size() == std::string("P6\n512 512\n255\n").size() + 512 * 512 * 3);
  const std::string three = render_scatter_ppm(generate_dataset("torus", 1, 100));
  CHECK(three.starts_with("P6\n1024 512\n255\n"));
  CHECK(render_scatter_ppm(generate_dataset("two_moons", 1, 100)) == two);
  CHECK_THROWS_AS(render_scatter_ppm(Mat::Zero(5, 4)), ShapeError);
  CHECK_THROWS_AS(render_scatter_ppm(Mat::Zero(5, 1)), ShapeError);
}

TEST_CASE("checkerboard plot ink falls on the on-cells") {
  const int panel = 512;
  const double extent = 1.5;
  const std::string img = render_scatter_ppm(generate_dataset("checkerboard", 2, 20000), panel, extent);
  const std::size_t header = std::string("P6\n512 512\n255\n").size();
  long ink = 0, on = 0;
  for (int py = 0; py < panel; ++py) {
    for (int px = 0; px < panel; ++px) {
      if (static_cast<unsigned char>(img[header + (static_cast<std::size_t>(py) * panel + px) * 3]) != 0) continue;
      ++ink;
      const double x = -extent + (px + 0.5) * 2 * extent / panel;
      const double y = -extent + (panel - 1 - py + 0.5) * 2 * extent / panel;
      on += std::abs(x) <= 1.0 && std::abs(y) <= 1.0 && checkerboard_on_cell(x, y);
    }
  }
  CHECK(ink > 10000);
  CHECK(static_cast<double>(on) / ink >= 0.95);
}
