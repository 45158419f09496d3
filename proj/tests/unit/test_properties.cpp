// Randomized properties that tie the modules together.
#include "cfm/metrics.hpp"
#include "cfm/oracle.hpp"
#include "cfm/rng.hpp"
#include "cfm/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace cfm;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

const Formulation kAll[] = {Formulation::ufm(), Formulation::x1fm(), Formulation::ddim(), Formulation::edm()};

constexpr int kSteps = 4000;

}  // namespace

TEST_CASE("the exact cumulative field is the posterior average of its own regression target") {
  // With two point masses the posterior over x1 is a two-point law, so the
  // average of the conditional targets can be formed exactly.
  const auto target = AnalyticTarget::two_point();
  Rng rng(1);
  for (const auto& form : kAll) {
    for (int trial = 0; trial < 3; ++trial) {
      const double tau_t = rng.uniform(0.1, 0.6), tau_r = rng.uniform(tau_t + 0.05, 0.95);
      const double t = form.denormalize(tau_t), r = form.denormalize(tau_r);
      const auto pc = path_coeffs(form, t);
      const Vec x = v1(pc.a * rng.uniform(-0.8, 0.8) + pc.b * 0.3 * rng.normal());

      const double ht = 1e-4 * form.span(), hx = 1e-4 * std::max(1.0, pc.b);
      const Vec m = cumulative_field_oracle(form, target, x, t, r, kSteps);
      const Vec dm_dt = (cumulative_field_oracle(form, target, x, t + ht, r, kSteps) -
                         cumulative_field_oracle(form, target, x, t - ht, r, kSteps)) / (2 * ht);
      const Vec dm_dx = (cumulative_field_oracle(form, target, x + v1(hx), t, r, kSteps) -
                         cumulative_field_oracle(form, target, x - v1(hx), t, r, kSteps)) / (2 * hx);

      const double lp = -std::pow(x[0] - pc.a, 2) / (2 * pc.b * pc.b);
      const double lm = -std::pow(x[0] + pc.a, 2) / (2 * pc.b * pc.b);
      const double top = std::max(lp, lm);
      const double wp = std::exp(lp - top) / (std::exp(lp - top) + std::exp(lm - top));
      Vec avg = Vec::Zero(1);
      for (const auto& [x1, w] : {std::pair{1.0, wp}, std::pair{-1.0, 1.0 - wp}}) {
        const Vec mc = conditional_instantaneous(form, x, v1(x1), t);
        const Vec dcomb = dm_dt + partial4_f_diagonal(form, mc, x, t).cwiseProduct(dm_dx);
        avg += w * cfm_target(form, dcomb, x, v1(x1), t, r);
      }
      CHECK(std::abs(avg[0] - m[0]) < 2e-3 * std::max(1.0, std::abs(m[0])));
    }
  }
}

TEST_CASE("the cumulative field tends to the instantaneous field as r -> t") {
  Vec w(2), s(2);
  Mat mu(2, 1);
  w << 0.5, 0.5;
  mu << -0.7, 0.9;
  s << 0.2, 0.1;
  const auto target = AnalyticTarget::gaussian_mixture(w, mu, s);
  for (const auto& form : kAll) {
    const double t = form.denormalize(0.3);
    const Vec x = v1(0.2);
    const Vec m0 = marginal_instantaneous_oracle(form, target, x, t);
    const double e1 = (cumulative_field_oracle(form, target, x, t, form.denormalize(0.32), kSteps) - m0).norm();
    const double e2 = (cumulative_field_oracle(form, target, x, t, form.denormalize(0.31), kSteps) - m0).norm();
    CHECK(e2 < 0.7 * e1);
  }
}

TEST_CASE("one-dimensional flow maps preserve order") {
  const auto target = AnalyticTarget::two_point();
  Rng rng(2);
  for (const auto& form : kAll) {
    const double t = form.denormalize(0.0), r = form.denormalize(0.9);
    double prev = -1e300;
    for (double x = -2.0; x <= 2.0; x += 0.25) {
      const double scale = path_coeffs(form, t).b;
      const double y = flowmap_oracle(form, target, v1(x * scale), t, r, 1000)[0];
      CHECK(y > prev);
      prev = y;
    }
  }
}

TEST_CASE("time pairs are always ordered toward the data end") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Formulation& form = kAll[rng.below(4)];
    const TimeSampler s{rng.uniform(), rng.uniform() < 0.5 ? TimeDistribution::Uniform : TimeDistribution::LogUniform};
    for (int i = 0; i < 500; ++i) {
      const auto [t, r] = sample_times(s, form, rng);
      REQUIRE(form.direction() * (r - t) >= 0.0);
      REQUIRE(std::isfinite(target_derivative_coefficient(form, t, r)));
    }
  }
}

TEST_CASE("energy distance is nonnegative and symmetric on random sets") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(40)), m = 2 + static_cast<Eigen::Index>(rng.below(40));
    Mat a(n, 2), b(m, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal() + rng.uniform();
    const double ab = energy_distance(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(energy_distance(b, a)).epsilon(1e-12));
    CHECK(chamfer(a, b) >= 0.0);
  }
}
