#include "cfm/error.hpp"
#include "cfm/oracle.hpp"
#include "cfm/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace cfm;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

AnalyticTarget mixture2d() {
  Vec w(3), s(3);
  Mat mu(3, 2);
  w << 0.2, 0.5, 0.3;
  mu << -1.0, 0.5, 0.8, 0.2, 0.0, -1.0;
  s << 0.25, 0.15, 0.3;
  return AnalyticTarget::gaussian_mixture(w, mu, s);
}

const Formulation kAll[] = {Formulation::ufm(), Formulation::x1fm(), Formulation::ddim(), Formulation::edm()};

}  // namespace

TEST_CASE("marginal field of simple targets") {
  CHECK(marginal_instantaneous_oracle(Formulation::ufm(), AnalyticTarget::point_mass(v1(3)), v1(0), 0.0)[0] ==
        doctest::Approx(3.0));
  CHECK(marginal_instantaneous_oracle(Formulation::edm(), AnalyticTarget::point_mass(v1(3)), v1(-4), 5.0)[0] ==
        doctest::Approx(3.0));
  CHECK(std::abs(marginal_instantaneous_oracle(Formulation::ufm(), AnalyticTarget::two_point(), v1(0), 0.5)[0]) < 1e-15);
  CHECK(marginal_instantaneous_oracle(Formulation::x1fm(), AnalyticTarget::two_point(), v1(0.9), 0.9)[0] ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("posterior mean agrees with importance-weighted Monte Carlo") {
  const auto target = mixture2d();
  Rng rng(1);
  const int n = 200000;
  for (const auto& form : {Formulation::x1fm(), Formulation::edm()}) {
    const double t = form.denormalize(0.6);
    Vec x(2);
    x << 0.3, -0.2;
    const Vec exact = target.posterior_mean(form, x, t);
    const auto pc = path_coeffs(form, t);
    Vec num = Vec::Zero(2);
    double den = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      const int k = u < 0.2 ? 0 : (u < 0.7 ? 1 : 2);
      Vec x1(2);
      x1 << target.means()(k, 0) + target.stds()[k] * rng.normal(), target.means()(k, 1) + target.stds()[k] * rng.normal();
      const double w = std::exp(-(x - pc.a * x1).squaredNorm() / (2 * pc.b * pc.b));
      num += w * x1;
      den += w;
    }
    CHECK((num / den - exact).norm() < 2e-2);
  }
}

TEST_CASE("flow map of a point mass has the closed form") {
  const auto target = AnalyticTarget::point_mass(v1(2.0));
  for (double x : {-1.0, 0.5}) {
    const double t = 0.2, r = 0.7;
    const double exact = x + (r - t) * (2.0 - x) / (1.0 - t);
    CHECK(flowmap_oracle(Formulation::ufm(), target, v1(x), t, r)[0] == doctest::Approx(exact).epsilon(1e-10));
    CHECK(cumulative_field_oracle(Formulation::ufm(), target, v1(x), t, r)[0] ==
          doctest::Approx((2.0 - x) / (1.0 - t)).epsilon(1e-8));
  }
}

TEST_CASE("flow map semigroup") {
  const auto target = mixture2d();
  Vec x(2);
  x << 0.4, -0.7;
  for (const auto& form : kAll) {
    const double t = form.denormalize(0.1), s = form.denormalize(0.5), r = form.denormalize(0.9);
    const Vec direct = flowmap_oracle(form, target, x * (form.kind() == Kind::EDM ? 5.0 : 1.0), t, r);
    const Vec composed =
        flowmap_oracle(form, target, flowmap_oracle(form, target, x * (form.kind() == Kind::EDM ? 5.0 : 1.0), t, s), s, r);
    CHECK((direct - composed).norm() < 1e-4);
  }
}

TEST_CASE("cumulative field inverts the transport function") {
  const auto target = mixture2d();
  Vec x(2);
  x << -0.3, 0.6;
  for (const auto& form : kAll) {
    const double t = form.denormalize(0.3), r = form.denormalize(0.8);
    const Vec m = cumulative_field_oracle(form, target, x, t, r, 2000);
    const Vec psi = flowmap_oracle(form, target, x, t, r, 2000);
    CHECK((f_apply(form, m, x, t, r) - psi).norm() < 1e-10 * std::max(1.0, psi.norm()));
    CHECK(cumulative_field_oracle(form, target, x, t, t) == marginal_instantaneous_oracle(form, target, x, t));
  }
}

TEST_CASE("combined derivative of a point-mass cumulative field vanishes") {
  const auto target = AnalyticTarget::point_mass(v1(2.0));
  CHECK(std::abs(combined_derivative_oracle(Formulation::ufm(), target, v1(0.3), 0.3, 0.8, 1e-4, 500)[0]) < 1e-6);
  CHECK(std::abs(combined_derivative_oracle(Formulation::x1fm(), target, v1(0.3), 0.3, 0.8, 1e-4, 500)[0]) < 1e-6);
}

TEST_CASE("oracle argument checks") {
  Vec w(1), s(1);
  Mat mu(1, 1);
  w << 0.5;
  mu << 0.0;
  s << 1.0;
  CHECK_THROWS_AS(AnalyticTarget::gaussian_mixture(w, mu, s), DomainError);
  CHECK_THROWS_AS(AnalyticTarget::two_point().posterior_mean(Formulation::ufm(), Vec::Zero(2), 0.5), ShapeError);
  CHECK_THROWS_AS(flowmap_oracle(Formulation::ufm(), AnalyticTarget::two_point(), v1(0), 0.2, 1.5), DomainError);
  CHECK_THROWS_AS(flowmap_oracle(Formulation::ufm(), AnalyticTarget::two_point(), v1(0), 0.2, 0.5, 0), ConfigError);
}
