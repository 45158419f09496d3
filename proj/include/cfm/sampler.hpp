#pragma once

// Few-step generation with a learned (or exact) cumulative field:
//   x <- F[m(x, S_k, S_{k+1}), x, S_k, S_{k+1}],  k = 0..n-1.

#include "cfm/formulation.hpp"
#include "cfm/network.hpp"
#include "cfm/rng.hpp"

#include <functional>
#include <vector>

namespace cfm {

struct SampleSchedule {
  std::vector<double> points;  // S_0 = t0, ..., S_n = t_end()

  std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
};

// Uniform grid S_k = t0 + k (t1 - t0) / n with the last point clamped to
// form.t_end().
SampleSchedule uniform_schedule(const Formulation& form, int n);

// Initial draws from the base distribution at t0: b(t0) * N(0, I).
Mat draw_noise(const Formulation& form, Eigen::Index n, Eigen::Index dim, Rng& rng);

// Batched field m(x, t, r) with one time pair shared by all rows.
using FieldFn = std::function<Mat(const Mat& x, double t, double r)>;

Mat sample(const FieldFn& field, const Formulation& form, const SampleSchedule& schedule, const Mat& noise);
Mat sample(NetworkEvaluator& net, const Formulation& form, const SampleSchedule& schedule, const Mat& noise);

}  // namespace cfm
