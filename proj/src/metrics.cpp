#include "cfm/metrics.hpp"

#include "cfm/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

namespace cfm {

namespace {

void require_same_dim(const char* what, const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
}

double nearest_brute(const Mat& from, const Mat& to) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    total += (to.rowwise() - from.row(i)).rowwise().squaredNorm().minCoeff();
  }
  return total / static_cast<double>(from.rows());
}

// Uniform grid over `to`; rings of cells are searched outward until no
// unvisited cell can hold a closer point.
class Grid {
 public:
  explicit Grid(const Mat& pts) : pts_(pts), dim_(pts.cols()) {
    lo_ = pts.colwise().minCoeff();
    const Eigen::RowVectorXd hi = pts.colwise().maxCoeff();
    const double extent = std::max((hi - lo_).maxCoeff(), 1e-12);
    const double per_axis = std::pow(static_cast<double>(pts.rows()) / 2.0, 1.0 / static_cast<double>(dim_));
    cell_ = extent / std::max(1.0, std::floor(per_axis));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) cells_[key(coords(pts.row(i)))].push_back(i);
  }

  double nearest_sq(const Eigen::RowVectorXd& p) const {
    const auto c = coords(p);
    double best = std::numeric_limits<double>::infinity();
    for (long ring = 0;; ++ring) {
      visit_ring(c, ring, [&](const std::vector<Eigen::Index>& ids) {
        for (Eigen::Index id : ids) best = std::min(best, (pts_.row(id) - p).squaredNorm());
      });
      const double reach = static_cast<double>(ring) * cell_;
      if (std::isfinite(best) && reach * reach >= best) return best;
      if (ring > 1 << 20) return best;
    }
  }

 private:
  std::array<long, 3> coords(const Eigen::RowVectorXd& p) const {
    std::array<long, 3> c{0, 0, 0};
    for (Eigen::Index d = 0; d < dim_; ++d) c[d] = static_cast<long>(std::floor((p[d] - lo_[d]) / cell_));
    return c;
  }
  static long long key(const std::array<long, 3>& c) {
    return (static_cast<long long>(c[0]) * 2097152LL + c[1]) * 2097152LL + c[2];
  }
  template <class F>
  void visit_ring(const std::array<long, 3>& c, long ring, F&& f) const {
    const long rz = dim_ >= 3 ? ring : 0, ry = dim_ >= 2 ? ring : 0;
    for (long dx = -ring; dx <= ring; ++dx) {
      for (long dy = -ry; dy <= ry; ++dy) {
        for (long dz = -rz; dz <= rz; ++dz) {
          const long m = std::max({std::abs(dx), std::abs(dy), std::abs(dz)});
          if (m != ring) continue;
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it != cells_.end()) f(it->second);
        }
      }
    }
  }

  const Mat& pts_;
  Eigen::Index dim_;
  Eigen::RowVectorXd lo_;
  double cell_ = 1.0;
  std::unordered_map<long long, std::vector<Eigen::Index>> cells_;
};

double nearest_grid(const Mat& from, const Mat& to) {
  const Grid grid(to);
  double total = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) total += grid.nearest_sq(from.row(i));
  return total / static_cast<double>(from.rows());
}

double mean_pair_distance(const Mat& a, const Mat& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    total += (b.rowwise() - a.row(i)).rowwise().norm().sum();
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double chamfer(const Mat& a, const Mat& b) {
  require_same_dim("chamfer", a, b);
  if (a.rows() == 0 || b.rows() == 0) throw ShapeError("chamfer: point sets must be nonempty");
  const double pairs = static_cast<double>(a.rows()) * static_cast<double>(b.rows());
  if (pairs <= 1e8 || a.cols() > 3) return nearest_brute(a, b) + nearest_brute(b, a);
  return nearest_grid(a, b) + nearest_grid(b, a);
}

double energy_distance(const Mat& a, const Mat& b) {
  require_same_dim("energy_distance", a, b);
  if (a.rows() < 2 || b.rows() < 2) throw ShapeError("energy_distance: needs at least two points per set");
  const double v = 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
  return std::max(0.0, v);
}

double histogram_tv(const Mat& a, const Mat& b, int bins, double extent) {
  require_same_dim("histogram_tv", a, b);
  if (a.cols() != 2) throw ShapeError("histogram_tv: expects 2D points");
  if (a.rows() == 0 || b.rows() == 0) throw ShapeError("histogram_tv: point sets must be nonempty");
  auto hist = [&](const Mat& p) {
    Mat h = Mat::Zero(bins, bins);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      auto idx = [&](double v) {
        return std::clamp(static_cast<int>(std::floor((v + extent) / (2.0 * extent) * bins)), 0, bins - 1);
      };
      h(idx(p(i, 0)), idx(p(i, 1))) += 1.0;
    }
    return Mat(h / static_cast<double>(p.rows()));
  };
  return 0.5 * (hist(a) - hist(b)).cwiseAbs().sum();
}

}  // namespace cfm
