#include "cfm/verify.hpp"

#include "cfm/error.hpp"
#include "cfm/network.hpp"
#include "cfm/rng.hpp"
#include "cfm/sampler.hpp"
#include "cfm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cfm {

namespace {

Vec vec1(double v) { return Vec::Constant(1, v); }

// Points on the conditional path of the two-point target at time t.
std::vector<Vec> typical_states(const Formulation& form, double t) {
  const PathCoeffs pc = path_coeffs(form, t);
  const double z[] = {-1.3, -0.4, 0.5, 1.2};
  std::vector<Vec> out;
  for (int i = 0; i < 4; ++i) out.push_back(vec1(pc.a * (i % 2 ? 1.0 : -1.0) + pc.b * z[i]));
  return out;
}

double tau_time(const Formulation& form, double tau) { return form.clamp(form.denormalize(tau)); }

}  // namespace

FAssumptionStats f_assumption_stats(const Formulation& form, int points, std::uint64_t seed) {
  Rng rng(seed, 0x66617373);
  FAssumptionStats s;
  s.mixed_partial_min = std::numeric_limits<double>::infinity();
  const double h = 1e-4 * form.span();
  for (int i = 0; i < points; ++i) {
    const double t = form.denormalize(rng.uniform(1e-3, 1.0 - 1e-3));
    const double r = form.denormalize(rng.uniform(1e-3, 1.0 - 1e-3));
    Vec f1(2), f2(2);
    f1 << rng.normal(), rng.normal();
    f2 << rng.normal(), rng.normal();
    s.identity = std::max(s.identity, (f_apply(form, f1, f2, t, t) - f2).cwiseAbs().maxCoeff());

    const Vec full = f_apply(form, f1, f2, t, r);
    const Vec only1 = f_apply(form, f1, Vec::Zero(2), t, r);
    const Vec only2 = f_apply(form, Vec::Zero(2), f2, t, r);
    const AffineCoeffs c = affine_coeffs(form, t, r);
    const double scale = std::max(1.0, (c.P * f1).cwiseAbs().maxCoeff() + (c.Q * f2).cwiseAbs().maxCoeff());
    const double lin = (full - only1 - only2).cwiseAbs().maxCoeff();
    const double coeff = (full - c.P * f1 - c.Q * f2).cwiseAbs().maxCoeff();
    s.affine = std::max(s.affine, std::max(lin, coeff) / scale);

    // d/df4 and d/df3 of dF/df1 on the diagonal f3 = f4 = t.
    const Vec e = vec1(1.0), zero = vec1(0.0);
    const double d4 = (f_apply(form, e, zero, t, t + h)[0] - f_apply(form, e, zero, t, t - h)[0]) / (2.0 * h);
    const double d3 = (f_apply(form, e, zero, t + h, t)[0] - f_apply(form, e, zero, t - h, t)[0]) / (2.0 * h);
    s.mixed_partial_min = std::min({s.mixed_partial_min, std::abs(d4), std::abs(d3)});
  }
  return s;
}

double consistency_slope(const Formulation& form, const AnalyticTarget& target, int k_lo, int k_hi, int n_steps) {
  const double t = tau_time(form, 0.3);
  std::vector<double> lx, ly;
  for (int k = k_lo; k <= k_hi; ++k) {
    const double dr = std::ldexp(1.0, -k) * form.span();
    const double r = t + form.direction() * dr;
    double worst = 0.0;
    for (const Vec& x : typical_states(form, t)) {
      const Vec diff =
          cumulative_field_oracle(form, target, x, t, r, n_steps) - marginal_instantaneous_oracle(form, target, x, t);
      worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
    lx.push_back(std::log(dr));
    ly.push_back(std::log(worst));
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / n;
    my += ly[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

double semigroup_error(const Formulation& form, const AnalyticTarget& target, int n_steps) {
  const double grid[] = {0.0, 0.2, 0.4, 0.6, 0.8};
  double worst = 0.0;
  for (double a : grid) {
    for (double b : grid) {
      for (double c : grid) {
        if (!(a <= b && b <= c)) continue;
        const double t = tau_time(form, a), s = tau_time(form, b), r = tau_time(form, c);
        for (const Vec& x : typical_states(form, t)) {
          const Vec mid = flowmap_oracle(form, target, x, t, s, n_steps);
          const Vec two = flowmap_oracle(form, target, mid, s, r, n_steps);
          const Vec one = flowmap_oracle(form, target, x, t, r, n_steps);
          worst = std::max(worst, (two - one).cwiseAbs().maxCoeff());
        }
      }
    }
  }
  return worst;
}

double instantiation_residual(const Formulation& form, const AnalyticTarget& target, int n_steps, double sign) {
  auto field = [&](const Vec& x, double t, double r) -> Vec {
    const Vec psi = flowmap_oracle(form, target, x, t, r, n_steps);
    const AffineCoeffs c = affine_coeffs(form, t, r);
    return (psi - c.Q * x) / (sign * c.P);
  };
  const double h = 1e-4;
  const double tt[] = {0.1, 0.3, 0.5, 0.7};
  const double rr[] = {0.2, 0.4, 0.6, 0.8, 0.9};
  double worst = 0.0;
  for (double a : tt) {
    for (double b : rr) {
      if (b <= a) continue;
      const double t = tau_time(form, a), r = tau_time(form, b);
      for (const Vec& x : typical_states(form, t)) {
        const Vec m_inst = marginal_instantaneous_oracle(form, target, x, t);
        const double ht = h * form.span();
        const Vec dt = (field(x, t + ht, r) - field(x, t - ht, r)) / (2.0 * ht);
        const Vec v = partial4_f_diagonal(form, m_inst, x, t);
        Vec dcomb = dt;
        if (v.norm() > 0.0) {
          const double hx = h / v.norm();
          dcomb += (field(x + hx * v, t, r) - field(x - hx * v, t, r)) / (2.0 * hx);
        }
        const Vec predicted = cfm_target_from_instantaneous(form, m_inst, dcomb, t, r);
        const Vec actual = field(x, t, r);
        const double scale = std::max(1.0, actual.cwiseAbs().maxCoeff());
        worst = std::max(worst, (predicted - actual).cwiseAbs().maxCoeff() / scale);
      }
    }
  }
  return worst;
}

double derivative_mode_disagreement(const Formulation& form, std::uint64_t seed, int points) {
  NetworkConfig cfg;
  cfg.hidden = {64, 64};
  cfg.embedding.dim = 32;
  cfg.time_origin = form.t0();
  cfg.time_span = form.t1() - form.t0();
  Network net(cfg, seed);
  Rng rng(seed, 0x6a7670);
  const double bound = 1.0 / std::sqrt(64.0);
  for (const char* name : {"head.w", "head.b"}) {
    Mat& p = net.parameter(name);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(-bound, bound);
  }
  NetworkEvaluator eval(net);
  Mat x(points, 2), x1(points, 2);
  Vec t(points), r(points);
  const TimeSampler sampler{.alpha = 0.0};
  for (int i = 0; i < points; ++i) {
    std::tie(t[i], r[i]) = sample_times(sampler, form, rng);
    x1.row(i) << rng.normal(), rng.normal();
    Vec eps(2);
    eps << rng.normal(), rng.normal();
    x.row(i) = sample_conditional(form, x1.row(i).transpose(), eps, t[i]).x.transpose();
  }
  const double h = 1e-4 * form.span() * form.direction();
  const Mat fd = combined_derivative_fd(eval, form, x, x1, t, r, h);
  const Mat jvp = combined_derivative_jvp(eval, form, x, x1, t, r);
  return (fd - jvp).norm() / std::max(jvp.norm(), 1e-300);
}

double sampler_schedule_spread(const Formulation& form, const AnalyticTarget& target, int n_steps) {
  Rng rng(7, 0x73616d70);
  const Mat noise = draw_noise(form, 6, target.dim(), rng);
  const FieldFn field = [&](const Mat& x, double t, double r) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.row(i) = cumulative_field_oracle(form, target, x.row(i).transpose(), t, r, n_steps).transpose();
    }
    return out;
  };
  const Mat one = sample(field, form, uniform_schedule(form, 1), noise);
  double worst = 0.0;
  for (int n : {2, 4, 8}) {
    worst = std::max(worst, (sample(field, form, uniform_schedule(form, n), noise) - one).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::vector<std::string> verify_check_ids() {
  return {"f_identity",    "f_affine",        "f_nondegenerate",  "consistency_limit",
          "semigroup",     "instantiation",   "derivative_modes", "sampler_schedule"};
}

std::vector<VerifyRow> run_verify(const VerifyOptions& options) {
  for (const auto& [id, tol] : options.tolerance) {
    const auto ids = verify_check_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw ConfigError("tolerance", "unknown check '" + id + "'");
    if (!std::isfinite(tol)) throw ConfigError("tolerance", "must be finite");
  }
  auto wanted = [&](const std::string& id) {
    return options.checks.empty() || std::find(options.checks.begin(), options.checks.end(), id) != options.checks.end();
  };
  auto tol = [&](const std::string& id, double fallback) {
    auto it = options.tolerance.find(id);
    return it == options.tolerance.end() ? fallback : it->second;
  };
  const AnalyticTarget target = AnalyticTarget::two_point();
  const int n = options.oracle_steps;
  std::vector<VerifyRow> rows;
  auto upper = [&](const std::string& id, const Formulation& form, double value, double fallback) {
    const double t = tol(id, fallback);
    rows.push_back({id, std::string(form.name()), value, t, value <= t});
  };
  for (Kind kind : {Kind::UFM, Kind::X1FM, Kind::DDIM, Kind::EDM}) {
    if (options.only && *options.only != kind) continue;
    const Formulation form = Formulation::of(kind);
    const bool ddim = kind == Kind::DDIM;
    if (wanted("f_identity") || wanted("f_affine") || wanted("f_nondegenerate")) {
      const FAssumptionStats s = f_assumption_stats(form, 1000, options.seed);
      if (wanted("f_identity")) upper("f_identity", form, s.identity, 0.0);
      if (wanted("f_affine")) upper("f_affine", form, s.affine, 1e-12);
      if (wanted("f_nondegenerate")) {
        const double t = tol("f_nondegenerate", 1e-8);
        rows.push_back({"f_nondegenerate", std::string(form.name()), s.mixed_partial_min, t, s.mixed_partial_min > t});
      }
    }
    if (wanted("consistency_limit")) upper("consistency_limit", form, 1.0 - consistency_slope(form, target, 3, 10, n), 0.1);
    if (wanted("semigroup")) upper("semigroup", form, semigroup_error(form, target, n), ddim ? 1e-2 : 1e-4);
    if (wanted("instantiation")) {
      upper("instantiation", form, instantiation_residual(form, target, n, options.negative_control ? -1.0 : 1.0),
            ddim ? 1e-2 : 1e-3);
    }
    if (wanted("derivative_modes")) upper("derivative_modes", form, derivative_mode_disagreement(form, options.seed), 5e-3);
    if (wanted("sampler_schedule")) upper("sampler_schedule", form, sampler_schedule_spread(form, target, n), 1e-3);
  }
  return rows;
}

std::string format_verify_csv(const std::vector<VerifyRow>& rows) {
  std::string out = "check_id,formulation,max_residual,tolerance,pass\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.check_id + "," + r.formulation + ",";
    std::snprintf(buf, sizeof buf, "%.6e", r.max_residual);
    out += buf;
    out += ",";
    std::snprintf(buf, sizeof buf, "%.6e", r.tolerance);
    out += buf;
    out += r.pass ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace cfm
