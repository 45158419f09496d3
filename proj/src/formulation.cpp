#include "cfm/formulation.hpp"

#include "cfm/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace cfm {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void singular(const Formulation& form, const std::string& what) {
  throw DomainError(std::string(form.name()) + ": " + what);
}

void require_in_domain(const Formulation& form, double t, const char* arg) {
  if (!std::isfinite(t) || !form.contains(t)) {
    singular(form, std::string(arg) + "=" + fmt(t) + " outside time domain [" + fmt(form.t0()) + ", " +
                       fmt(form.t1()) + "]");
  }
}

struct DdimTerms {
  double abar;
  double one_minus;  // 1 - abar, accurate near abar = 1
  double a;          // sqrt(abar)
  double s;          // sqrt(1 - abar)
};

DdimTerms ddim_terms(const DdimSchedule& sch, double t) {
  // int_0^t log(u0 - k s) ds = t log(u0) - t h(z), z = k t / u0, written to
  // avoid cancelling two large terms when k is small.
  const double beta_int = [&] {
    const double u0 = 1.0 - sch.beta0;
    const double z = (sch.betaT - sch.beta0) / sch.T * t / u0;
    const double h = std::abs(z) < 1e-8 ? 0.5 * z : ((1.0 - z) * std::log1p(-z) + z) / z;
    return t * (std::log1p(-sch.beta0) - h);
  }();
  DdimTerms d{};
  d.abar = std::exp(beta_int);
  d.one_minus = -std::expm1(beta_int);
  d.a = std::sqrt(d.abar);
  d.s = std::sqrt(d.one_minus);
  return d;
}

// Singular point of F in its third argument.
void require_regular_start(const Formulation& form, double t) {
  switch (form.kind()) {
    case Kind::UFM:
      break;
    case Kind::X1FM:
      if (t == 1.0) singular(form, "singular at t=1 (division by 1 - t)");
      break;
    case Kind::EDM:
      if (t == 0.0) singular(form, "singular at t=0 (division by t)");
      break;
    case Kind::DDIM: {
      const auto d = ddim_terms(form.schedule(), t);
      if (!(d.one_minus > 0.0) || !(d.abar > 0.0)) {
        singular(form, "alpha_bar(" + fmt(t) + ")=" + fmt(d.abar) + " must lie in (0, 1)");
      }
      break;
    }
  }
}

}  // namespace

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::UFM: return "ufm";
    case Kind::X1FM: return "x1fm";
    case Kind::DDIM: return "ddim";
    case Kind::EDM: return "edm";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ufm" || lower == "u-fm") return Kind::UFM;
  if (lower == "x1fm" || lower == "x1-fm") return Kind::X1FM;
  if (lower == "ddim") return Kind::DDIM;
  if (lower == "edm") return Kind::EDM;
  throw ConfigError("kind", "unknown formulation '" + std::string(name) + "' (expected ufm, x1fm, ddim, edm)");
}

double DdimSchedule::beta(double t) const { return beta0 + (t / T) * (betaT - beta0); }

double DdimSchedule::alpha_bar(double t) const { return ddim_terms(*this, t).abar; }

double DdimSchedule::alpha_bar_derivative(double t) const { return alpha_bar(t) * std::log1p(-beta(t)); }

Formulation Formulation::ufm() { return Formulation(Kind::UFM, 0.0, 1.0); }
Formulation Formulation::x1fm() { return Formulation(Kind::X1FM, 0.0, 1.0); }

Formulation Formulation::ddim(DdimSchedule schedule) {
  if (!(schedule.T > 0.0) || !(schedule.beta0 > 0.0) || !(schedule.betaT > 0.0) || schedule.beta0 >= 1.0 ||
      schedule.betaT >= 1.0) {
    throw ConfigError("ddim", "schedule needs T > 0 and betas in (0, 1)");
  }
  Formulation f(Kind::DDIM, schedule.T, 0.0);
  f.schedule_ = schedule;
  return f;
}

Formulation Formulation::edm(EdmParams params) {
  if (!(params.sigma_max > params.sigma_min) || params.sigma_min < 0.0) {
    throw ConfigError("edm", "requires sigma_max > sigma_min >= 0");
  }
  Formulation f(Kind::EDM, params.sigma_max, 0.0);
  f.edm_ = params;
  return f;
}

Formulation Formulation::of(Kind kind) {
  switch (kind) {
    case Kind::UFM: return ufm();
    case Kind::X1FM: return x1fm();
    case Kind::DDIM: return ddim();
    case Kind::EDM: return edm();
  }
  return ufm();
}

bool Formulation::contains(double t) const {
  const double lo = std::min(t0_, t1_), hi = std::max(t0_, t1_);
  const double slack = 1e-12 * span();
  return t >= lo - slack && t <= hi + slack;
}

double Formulation::clamp(double t) const {
  const double end = t_end();
  const double lo = std::min(t0_, end), hi = std::max(t0_, end);
  return std::clamp(t, lo, hi);
}

Vec f_apply(const Formulation& form, const Vec& f1, const Vec& f2, double f3, double f4) {
  if (f1.size() != f2.size()) throw ShapeError("f_apply: field and state dimensions differ");
  require_in_domain(form, f3, "f3");
  require_in_domain(form, f4, "f4");
  if (f3 == f4) return f2;
  require_regular_start(form, f3);
  switch (form.kind()) {
    case Kind::UFM:
      return f1 * (f4 - f3) + f2;
    case Kind::X1FM:
      return (f1 - f2) / (1.0 - f3) * (f4 - f3) + f2;
    case Kind::DDIM: {
      const auto d3 = ddim_terms(form.schedule(), f3);
      const auto d4 = ddim_terms(form.schedule(), f4);
      return d4.a * f1 + d4.s * (f2 - d3.a * f1) / d3.s;
    }
    case Kind::EDM:
      return (f4 - f3) * (f2 - f1) / f3 + f2;
  }
  return f2;
}

AffineCoeffs affine_coeffs(const Formulation& form, double t, double r) {
  require_in_domain(form, t, "t");
  require_in_domain(form, r, "r");
  if (t == r) return {0.0, 1.0};
  require_regular_start(form, t);
  switch (form.kind()) {
    case Kind::UFM:
      return {r - t, 1.0};
    case Kind::X1FM: {
      const double p = (r - t) / (1.0 - t);
      return {p, 1.0 - p};
    }
    case Kind::DDIM: {
      const auto dt = ddim_terms(form.schedule(), t);
      const auto dr = ddim_terms(form.schedule(), r);
      return {dr.a - dr.s * dt.a / dt.s, dr.s / dt.s};
    }
    case Kind::EDM:
      return {-(r - t) / t, 1.0 + (r - t) / t};
  }
  return {};
}

AffineCoeffs partial4_coeffs(const Formulation& form, double t) {
  require_in_domain(form, t, "t");
  require_regular_start(form, t);
  switch (form.kind()) {
    case Kind::UFM:
      return {1.0, 0.0};
    case Kind::X1FM:
      return {1.0 / (1.0 - t), -1.0 / (1.0 - t)};
    case Kind::DDIM: {
      const auto d = ddim_terms(form.schedule(), t);
      const double dabar = form.schedule().alpha_bar_derivative(t);
      return {dabar / (2.0 * d.a * d.one_minus), -dabar / (2.0 * d.one_minus)};
    }
    case Kind::EDM:
      return {-1.0 / t, 1.0 / t};
  }
  return {};
}

Vec partial4_f_diagonal(const Formulation& form, const Vec& m, const Vec& x, double t) {
  if (m.size() != x.size()) throw ShapeError("partial4_f_diagonal: field and state dimensions differ");
  const auto c = partial4_coeffs(form, t);
  return c.P * m + c.Q * x;
}

PathCoeffs path_coeffs(const Formulation& form, double t) {
  require_in_domain(form, t, "t");
  switch (form.kind()) {
    case Kind::UFM:
    case Kind::X1FM:
      return {t, 1.0 - t};
    case Kind::DDIM: {
      const auto d = ddim_terms(form.schedule(), t);
      return {d.a, d.s};
    }
    case Kind::EDM:
      return {1.0, t};
  }
  return {};
}

ConditionalSample sample_conditional(const Formulation& form, const Vec& x1, const Vec& eps, double t) {
  if (x1.size() != eps.size()) throw ShapeError("sample_conditional: data and noise dimensions differ");
  const auto c = path_coeffs(form, t);
  return ConditionalSample{c.a * x1 + c.b * eps, x1, eps, t};
}

Vec conditional_instantaneous(const Formulation& form, const Vec& x, const Vec& x1, double t) {
  if (x.size() != x1.size()) throw ShapeError("conditional_instantaneous: dimensions differ");
  require_in_domain(form, t, "t");
  if (form.kind() == Kind::UFM) {
    if (t == 1.0) singular(form, "conditional velocity singular at t=1");
    return (x1 - x) / (1.0 - t);
  }
  return x1;
}

Vec instantaneous_step(const Formulation& form, const Vec& m, const Vec& x, double t, double h) {
  if (h * form.direction() < 0.0) {
    singular(form, "step h=" + fmt(h) + " points away from the data endpoint");
  }
  require_in_domain(form, t + h, "t+h");
  return f_apply(form, m, x, t, t + h);
}

double target_derivative_coefficient(const Formulation& form, double t, double r) {
  require_in_domain(form, t, "t");
  require_in_domain(form, r, "r");
  if (t == r) return 0.0;
  switch (form.kind()) {
    case Kind::UFM:
      return r - t;
    case Kind::X1FM:
      if (r == 1.0) singular(form, "target singular at r=1");
      return (r - t) * (1.0 - t) / (1.0 - r);
    case Kind::EDM:
      if (r == 0.0) singular(form, "target singular at r=0");
      return (r - t) * t / r;
    case Kind::DDIM: {
      const auto dt = ddim_terms(form.schedule(), t);
      const auto dr = ddim_terms(form.schedule(), r);
      if (!(dr.one_minus > 0.0)) singular(form, "target singular where alpha_bar(r)=1");
      if (!(dt.one_minus > 0.0) || !(dt.abar > 0.0)) singular(form, "target singular where alpha_bar(t) in {0,1}");
      const double ratio_minus_one = (dt.s * dr.a - dr.s * dt.a) / (dr.s * dt.a);
      // 2 abar (1 - abar) / abar'(t) for the continuous linear-beta schedule.
      const double schedule_factor = 2.0 * dt.one_minus / std::log1p(-form.schedule().beta(t));
      return ratio_minus_one * schedule_factor;
    }
  }
  return 0.0;
}

Vec cfm_target_from_instantaneous(const Formulation& form, const Vec& m_inst, const Vec& dcomb, double t,
                                  double r) {
  if (m_inst.size() != dcomb.size()) throw ShapeError("cfm_target: field and derivative dimensions differ");
  const double c = target_derivative_coefficient(form, t, r);
  if (c == 0.0) return m_inst;
  return m_inst + c * dcomb;
}

Vec cfm_target(const Formulation& form, const Vec& dcomb, const Vec& x, const Vec& x1, double t, double r) {
  return cfm_target_from_instantaneous(form, conditional_instantaneous(form, x, x1, t), dcomb, t, r);
}

}  // namespace cfm
