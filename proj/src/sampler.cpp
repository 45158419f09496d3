#include "cfm/sampler.hpp"

#include "cfm/error.hpp"

namespace cfm {

SampleSchedule uniform_schedule(const Formulation& form, int n) {
  if (n < 1) throw ConfigError("steps", "sampling needs at least one step");
  SampleSchedule s;
  s.points.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k < n; ++k) s.points.push_back(form.t0() + k * (form.t1() - form.t0()) / n);
  s.points.push_back(form.t_end());
  return s;
}

Mat draw_noise(const Formulation& form, Eigen::Index n, Eigen::Index dim, Rng& rng) {
  const double b = path_coeffs(form, form.t0()).b;
  Mat out(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < dim; ++d) out(i, d) = b * rng.normal();
  }
  return out;
}

Mat sample(const FieldFn& field, const Formulation& form, const SampleSchedule& schedule, const Mat& noise) {
  if (schedule.steps() < 1) throw ConfigError("steps", "empty sampling schedule");
  Mat x = noise;
  if (x.rows() == 0) return x;
  for (std::size_t k = 0; k + 1 < schedule.points.size(); ++k) {
    const double t = schedule.points[k], r = schedule.points[k + 1];
    const Mat m = field(x, t, r);
    if (m.rows() != x.rows() || m.cols() != x.cols()) throw ShapeError("sample: field output has the wrong shape");
    const AffineCoeffs c = affine_coeffs(form, t, r);
    x = c.P * m + c.Q * x;
    if (!x.allFinite()) throw NonFiniteError("sample: non-finite state after step " + std::to_string(k));
  }
  return x;
}

Mat sample(NetworkEvaluator& net, const Formulation& form, const SampleSchedule& schedule, const Mat& noise) {
  return sample(
      [&](const Mat& x, double t, double r) {
        return net.forward(x, Vec::Constant(x.rows(), t), Vec::Constant(x.rows(), r));
      },
      form, schedule, noise);
}

}  // namespace cfm
