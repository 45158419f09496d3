#include "cfm/oracle.hpp"

#include "cfm/error.hpp"

#include <cmath>
#include <limits>

namespace cfm {

AnalyticTarget::AnalyticTarget(Vec weights, Mat means, Vec stds)
    : weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)) {
  if (means_.rows() == 0 || means_.cols() == 0) throw ShapeError("AnalyticTarget: needs at least one component");
  if (weights_.size() != means_.rows() || stds_.size() != means_.rows()) {
    throw ShapeError("AnalyticTarget: one weight and one std per component");
  }
  if ((weights_.array() <= 0.0).any()) throw DomainError("AnalyticTarget: weights must be positive");
  if ((stds_.array() < 0.0).any()) throw DomainError("AnalyticTarget: stds must be nonnegative");
  if (std::abs(weights_.sum() - 1.0) > 1e-12) throw DomainError("AnalyticTarget: weights must sum to 1");
}

AnalyticTarget AnalyticTarget::point_mass(const Vec& x1) {
  return AnalyticTarget(Vec::Ones(1), Mat(x1.transpose()), Vec::Zero(1));
}

AnalyticTarget AnalyticTarget::gaussian_mixture(const Vec& weights, const Mat& means, const Vec& stds) {
  return AnalyticTarget(weights, means, stds);
}

AnalyticTarget AnalyticTarget::two_point() {
  Mat means(2, 1);
  means << -1.0, 1.0;
  return AnalyticTarget(Vec::Constant(2, 0.5), means, Vec::Zero(2));
}

Vec AnalyticTarget::posterior_mean(const Formulation& form, const Vec& x, double t) const {
  if (x.size() != dim()) throw ShapeError("posterior_mean: state dimension does not match the target");
  const PathCoeffs pc = path_coeffs(form, t);
  const Eigen::Index K = components();
  const double D = static_cast<double>(dim());
  Vec logw(K);
  std::vector<Vec> mean_k(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    const double s2 = stds_[k] * stds_[k];
    const double v = pc.a * pc.a * s2 + pc.b * pc.b;
    const Vec mu = means_.row(k).transpose();
    const Vec resid = x - pc.a * mu;
    if (!(v > 0.0)) {
      throw DomainError(std::string(form.name()) + ": conditional density degenerate at t=" + std::to_string(t));
    }
    logw[k] = std::log(weights_[k]) - 0.5 * D * std::log(v) - resid.squaredNorm() / (2.0 * v);
    mean_k[static_cast<std::size_t>(k)] = mu + (pc.a * s2 / v) * resid;
  }
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw NonFiniteError("posterior_mean: every component likelihood underflowed");
  Vec out = Vec::Zero(dim());
  double total = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double w = std::exp(logw[k] - top);
    out += w * mean_k[static_cast<std::size_t>(k)];
    total += w;
  }
  return out / total;
}

Vec marginal_instantaneous_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t) {
  return conditional_instantaneous(form, x, target.posterior_mean(form, x, t), t);
}

namespace {

Vec velocity(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t) {
  return partial4_f_diagonal(form, marginal_instantaneous_oracle(form, target, x, t), x, t);
}

double clamp_end(const Formulation& form, double r) {
  const double end = form.t_end();
  return form.direction() * (r - end) > 0.0 ? end : r;
}

}  // namespace

Vec flowmap_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t, double r,
                   int n_steps) {
  if (n_steps < 1) throw ConfigError("n_steps", "must be at least 1");
  if (!form.contains(t) || !form.contains(r)) throw DomainError(std::string(form.name()) + ": time outside domain");
  t = clamp_end(form, t);
  r = clamp_end(form, r);
  if (t == r) return x;
  const double h = (r - t) / n_steps;
  Vec y = x;
  for (int k = 0; k < n_steps; ++k) {
    const double s = t + k * h;
    const double s_next = k + 1 == n_steps ? r : t + (k + 1) * h;
    const Vec k1 = velocity(form, target, y, s);
    const Vec pred = y + (s_next - s) * k1;
    const Vec k2 = velocity(form, target, pred, s_next);
    y += 0.5 * (s_next - s) * (k1 + k2);
  }
  return y;
}

Vec cumulative_field_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t, double r,
                            int n_steps) {
  r = clamp_end(form, r);
  if (t == r) return marginal_instantaneous_oracle(form, target, x, t);
  const Vec psi = flowmap_oracle(form, target, x, t, r, n_steps);
  const AffineCoeffs c = affine_coeffs(form, t, r);
  if (c.P == 0.0) throw DomainError(std::string(form.name()) + ": F is not invertible in m at this (t, r)");
  return (psi - c.Q * x) / c.P;
}

Vec combined_derivative_oracle(const Formulation& form, const AnalyticTarget& target, const Vec& x, double t,
                               double r, double h, int n_steps) {
  const double ht = h * form.span();
  auto m = [&](const Vec& y, double s) { return cumulative_field_oracle(form, target, y, s, r, n_steps); };
  const Vec dt = (m(x, t + ht) - m(x, t - ht)) / (2.0 * ht);
  const Vec v = partial4_f_diagonal(form, marginal_instantaneous_oracle(form, target, x, t), x, t);
  const double vn = v.norm();
  if (vn == 0.0) return dt;
  const double hx = h / vn;
  const Vec dx = (m(x + hx * v, t) - m(x - hx * v, t)) / (2.0 * hx);
  return dt + dx;
}

}  // namespace cfm
