#pragma once

// The abstract transport function F[f1, f2, f3, f4] and its four
// instantiations (u-prediction flow matching, x1-prediction flow matching,
// DDIM x-prediction, EDM denoiser), together with conditional paths,
// conditional instantaneous fields and the cumulative-field regression target.
//
// Naming: `x1` is always the data endpoint X_{t1} and `eps` the unit Gaussian
// draw, whatever the formulation calls them. Fields and states are D-vectors;
// every formulation acts on them through scalar coefficients.

#include "cfm/autodiff.hpp"

#include <cmath>
#include <string>
#include <string_view>

namespace cfm {

enum class Kind { UFM, X1FM, DDIM, EDM };

std::string_view kind_name(Kind kind);
// Accepts "ufm", "x1fm", "ddim", "edm" (case-insensitive).
Kind parse_kind(std::string_view name);

// Linear-beta DDPM schedule extended to continuous time:
//   beta(t) = beta0 + (t / T) (betaT - beta0),  log abar(t) = int_0^t log(1 - beta(s)) ds.
struct DdimSchedule {
  double T = 1000.0;
  double beta0 = 1e-4;
  double betaT = 0.02;

  double beta(double t) const;
  double alpha_bar(double t) const;
  // d abar / dt = abar(t) log(1 - beta(t)).
  double alpha_bar_derivative(double t) const;

  bool operator==(const DdimSchedule&) const = default;
};

struct EdmParams {
  double sigma_min = 0.002;
  double sigma_max = 10.0;

  bool operator==(const EdmParams&) const = default;
};

class Formulation {
 public:
  static Formulation ufm();
  static Formulation x1fm();
  static Formulation ddim(DdimSchedule schedule = {});
  static Formulation edm(EdmParams params = {});
  static Formulation of(Kind kind);

  Kind kind() const { return kind_; }
  std::string_view name() const { return kind_name(kind_); }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  // +1 when time increases toward the data endpoint, -1 otherwise.
  double direction() const { return t1_ > t0_ ? 1.0 : -1.0; }
  double span() const { return std::abs(t1_ - t0_); }
  // Distance kept from the singular data endpoint t1.
  double margin() const { return 1e-3 * span(); }
  // Usable end of the time domain, t1 pulled back by the margin.
  double t_end() const { return t1_ - direction() * margin(); }

  // Position along the domain: 0 at t0, 1 at t1.
  double normalize(double t) const { return (t - t0_) / (t1_ - t0_); }
  double denormalize(double tau) const { return t0_ + tau * (t1_ - t0_); }
  // Closed domain check between t0 and t1.
  bool contains(double t) const;
  // Clamp into [t0, t_end()].
  double clamp(double t) const;

  const DdimSchedule& schedule() const { return schedule_; }
  const EdmParams& edm_params() const { return edm_; }

  bool operator==(const Formulation&) const = default;

 private:
  Formulation(Kind kind, double t0, double t1) : kind_(kind), t0_(t0), t1_(t1) {}

  Kind kind_;
  double t0_;
  double t1_;
  DdimSchedule schedule_{};
  EdmParams edm_{};
};

// F[f1, f2, f3, f4] = P(f3, f4) f1 + Q(f3, f4) f2.
struct AffineCoeffs {
  double P = 0.0;
  double Q = 1.0;
};

// F evaluated directly from each formulation's closed form. Returns f2
// unchanged when f3 == f4.
Vec f_apply(const Formulation& form, const Vec& f1, const Vec& f2, double f3, double f4);
AffineCoeffs affine_coeffs(const Formulation& form, double t, double r);

// d F / d f4 at f4 = f3 = t is affine in (m, x): A(t) m + B(t) x.
AffineCoeffs partial4_coeffs(const Formulation& form, double t);
// The instantaneous velocity direction dF/df4 [m, x, t, t].
Vec partial4_f_diagonal(const Formulation& form, const Vec& m, const Vec& x, double t);

// Conditional path: x = a(t) x1 + b(t) eps.
struct PathCoeffs {
  double a = 0.0;
  double b = 0.0;
};
PathCoeffs path_coeffs(const Formulation& form, double t);

struct ConditionalSample {
  Vec x;
  Vec x1;
  Vec eps;
  double t = 0.0;
};
ConditionalSample sample_conditional(const Formulation& form, const Vec& x1, const Vec& eps, double t);

// m_t(x | x1): (x1 - x)/(1 - t) for u-FM, x1 otherwise.
Vec conditional_instantaneous(const Formulation& form, const Vec& x, const Vec& x1, double t);

// psi_{t -> t+h}(x) = F[m, x, t, t + h].
Vec instantaneous_step(const Formulation& form, const Vec& m, const Vec& x, double t, double h);

// Coefficient c(t, r) of the combined derivative in the cumulative-field
// target: target = m_t + c(t, r) * (d_t m_{t->r} + dF/df4[m_t, x, t, t] d_x m_{t->r}).
// c(t, t) == 0 exactly.
double target_derivative_coefficient(const Formulation& form, double t, double r);

// Regression target built from an instantaneous field value (conditional or
// marginal) and a combined-derivative estimate.
Vec cfm_target_from_instantaneous(const Formulation& form, const Vec& m_inst, const Vec& dcomb, double t,
                                  double r);
// Target with the conditional instantaneous field m_t(x | x1).
Vec cfm_target(const Formulation& form, const Vec& dcomb, const Vec& x, const Vec& x1, double t, double r);

}  // namespace cfm
