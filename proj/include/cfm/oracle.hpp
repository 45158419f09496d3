#pragma once

// Exact fields for analytic data distributions: posterior-weighted marginal
// instantaneous fields, finely integrated flow maps and the cumulative field
// recovered from them by inverting F.

#include "cfm/formulation.hpp"

#include <vector>

namespace cfm {

// Mixture of isotropic Gaussians over the data endpoint. A point mass is a
// single component with zero std.
class AnalyticTarget {
 public:
  static AnalyticTarget point_mass(const Vec& x1);
  // means: K x D, one component per row.
  static AnalyticTarget gaussian_mixture(const Vec& weights, const Mat& means, const Vec& stds);
  // Equal-weight point masses at -1 and +1 in 1D.
  static AnalyticTarget two_point();

  Eigen::Index dim() const { return means_.cols(); }
  Eigen::Index components() const { return means_.rows(); }
  const Vec& weights() const { return weights_; }
  const Mat& means() const { return means_; }
  const Vec& stds() const { return stds_; }

  // E[x1 | x_t = x] under the formulation's conditional path.
  Vec posterior_mean(const Formulation& form, const Vec& x, double t) const;

 private:
  AnalyticTarget(Vec weights, Mat means, Vec stds);

  Vec weights_;
  Mat means_;
  Vec stds_;
};

inline constexpr int kOracleSteps = 10000;

Vec marginal_instantaneous_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t);

// psi_{t->r}(x) by Heun integration of dx/dt = dF/df4[m_t(x), x, t, t].
// r is clamped to the usable domain end.
Vec flowmap_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t, double r,
                   int n_steps = kOracleSteps);

// m_{t->r}(x) = (psi_{t->r}(x) - Q x) / P; the marginal instantaneous field
// when r == t.
Vec cumulative_field_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t, double r,
                            int n_steps = kOracleSteps);

// d_t m_{t->r} + dF/df4[m_t, x, t, t] d_x m_{t->r} by central differences of
// the cumulative field oracle with step h (time step h * span).
Vec combined_derivative_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t,
                               double r, double h = 1e-4, int n_steps = kOracleSteps);

}  // namespace cfm
