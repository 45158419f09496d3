#include "cfm/checkpoint.hpp"
#include "cfm/error.hpp"
#include "cfm/training.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace cfm;

namespace {

NetworkConfig small_config(const Formulation& form, int dim = 2) {
  NetworkConfig c;
  c.input_dim = dim;
  c.hidden = {16, 16};
  c.embedding.dim = 8;
  c.embedding.scale = 4.0;
  c.time_origin = form.t0();
  c.time_span = form.t1() - form.t0();
  return c;
}

void randomize_head(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* name : {"head.w", "head.b"}) {
    Mat& p = net.parameter(name);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal() * 0.3;
  }
}

Mat gaussian_data(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Mat d(n, 2);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = 0.5 * rng.normal() + 0.25;
  return d;
}

TrainConfig small_train(const Formulation& form) {
  TrainConfig c;
  c.formulation = form;
  c.batch_size = 16;
  c.steps = 10;
  c.learning_rate = 1e-3;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("time sampler: alpha = 1 always gives r = t") {
  Rng rng(1);
  for (const auto& form : {Formulation::ufm(), Formulation::edm()}) {
    for (int i = 0; i < 1000; ++i) {
      const auto [t, r] = sample_times({1.0, TimeDistribution::Uniform}, form, rng);
      REQUIRE(t == r);
    }
  }
}

TEST_CASE("time sampler: ordering, clamping and the diagonal fraction") {
  for (const auto& form : {Formulation::ufm(), Formulation::edm(), Formulation::ddim()}) {
    for (auto base : {TimeDistribution::Uniform, TimeDistribution::LogUniform}) {
      Rng rng(2);
      const int n = 100000;
      int diag = 0;
      for (int i = 0; i < n; ++i) {
        const auto [t, r] = sample_times({0.3, base}, form, rng);
        REQUIRE(form.normalize(r) >= form.normalize(t));
        REQUIRE(form.normalize(t) >= 0.0);
        REQUIRE(form.normalize(r) <= form.normalize(form.t_end()) + 1e-15);
        diag += t == r;
      }
      CHECK(std::abs(diag / double(n) - 0.3) < 0.01);
    }
  }
}

TEST_CASE("time sampler: swapped draws follow the order-statistic laws") {
  Rng rng(3);
  const int n = 100000;
  std::vector<double> lo, hi;
  for (int i = 0; i < n; ++i) {
    const auto [t, r] = sample_times({0.0, TimeDistribution::Uniform}, Formulation::ufm(), rng);
    lo.push_back(t);
    hi.push_back(r);
  }
  std::sort(lo.begin(), lo.end());
  std::sort(hi.begin(), hi.end());
  double ks_lo = 0.0, ks_hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double emp = (i + 1.0) / n;
    // min of two uniforms: 1 - (1 - u)^2; max: u^2 (clamping at 0.999 moves no mass below it).
    if (hi[i] < 0.999) ks_hi = std::max(ks_hi, std::abs(emp - hi[i] * hi[i]));
    ks_lo = std::max(ks_lo, std::abs(emp - (1.0 - (1.0 - lo[i]) * (1.0 - lo[i]))));
  }
  const double crit = 1.63 / std::sqrt(double(n));
  CHECK(ks_lo < crit);
  CHECK(ks_hi < crit);
}

TEST_CASE("time distribution names") {
  CHECK(parse_time_distribution("uniform") == TimeDistribution::Uniform);
  CHECK(parse_time_distribution("log_uniform") == TimeDistribution::LogUniform);
  CHECK(time_distribution_name(TimeDistribution::LogUniform) == "log_uniform");
  CHECK_THROWS_AS(parse_time_distribution("beta"), ConfigError);
  DerivativeConfig d;
  d.h_fraction = 0.0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("combined derivative of a constant field is zero") {
  for (const auto& form : {Formulation::ufm(), Formulation::x1fm(), Formulation::ddim(), Formulation::edm()}) {
    Network net(small_config(form), 4);
    net.parameter("head.b") << 0.7, -1.2;
    NetworkEvaluator ev(net);
    const Vec x = Vec::Constant(2, 0.3), x1 = Vec::Constant(2, -0.5);
    const double t = form.denormalize(0.4), r = form.denormalize(0.7);
    CHECK(combined_derivative_fd(ev, form, x, x1, t, r, 1e-3 * form.span() * form.direction()).norm() == 0.0);
    CHECK(combined_derivative_jvp(ev, form, x, x1, t, r).norm() == 0.0);
  }
}

TEST_CASE("finite-difference and forward-mode derivatives agree to O(h)") {
  for (const auto& form : {Formulation::ufm(), Formulation::x1fm(), Formulation::ddim(), Formulation::edm()}) {
    Network net(small_config(form), 5);
    randomize_head(net, 6);
    NetworkEvaluator ev(net);
    Rng rng(7);
    double worst_coarse = 0.0, worst_fine = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Vec x1 = Vec::Constant(2, rng.normal() * 0.5);
      const Vec eps = Vec::Constant(2, rng.normal());
      const double t = form.denormalize(rng.uniform(0.05, 0.9)), r = form.denormalize(rng.uniform(0.05, 0.95));
      const Vec x = sample_conditional(form, x1, eps, t).x;
      const Vec jvp = combined_derivative_jvp(ev, form, x, x1, t, r);
      const double scale = std::max(1.0, jvp.norm());
      const double step = form.span() * form.direction();
      worst_coarse = std::max(worst_coarse, (combined_derivative_fd(ev, form, x, x1, t, r, 1e-3 * step) - jvp).norm() / scale);
      worst_fine = std::max(worst_fine, (combined_derivative_fd(ev, form, x, x1, t, r, 1e-5 * step) - jvp).norm() / scale);
    }
    CHECK(worst_coarse < 5e-2);
    CHECK(worst_fine < worst_coarse);
    CHECK(worst_fine < 1e-3);
  }
}

TEST_CASE("finite-difference step near the data endpoint is halved, then rejected") {
  const Formulation form = Formulation::ufm();
  Network net(small_config(form), 8);
  NetworkEvaluator ev(net);
  const Vec x = Vec::Zero(2), x1 = Vec::Ones(2);
  CHECK_NOTHROW(combined_derivative_fd(ev, form, x, x1, 0.9985, 0.999, 2e-3));
  CHECK_THROWS_AS(combined_derivative_fd(ev, form, x, x1, 0.9995, 0.999, 2e-3), DomainError);
}

TEST_CASE("objective: zero network with r = t gives the mean squared conditional field") {
  const Formulation form = Formulation::ufm();
  Network net(small_config(form), 10);
  CfmObjective obj(net, form, DerivativeConfig{}, 8);
  Rng rng(11);
  Batch b = make_batch(gaussian_data(100, 12), form, {1.0, TimeDistribution::Uniform}, 8, rng);
  double expected = 0.0;
  for (int i = 0; i < 8; ++i) {
    const Vec x = sample_conditional(form, b.x1.row(i).transpose(), b.eps.row(i).transpose(), b.t[i]).x;
    expected += conditional_instantaneous(form, x, b.x1.row(i).transpose(), b.t[i]).squaredNorm();
  }
  CHECK(obj.loss(b) == doctest::Approx(expected / 8).epsilon(1e-12));
  CHECK(obj.rejected() == 0);
}

TEST_CASE("objective: in-graph target matches the explicit target") {
  for (auto mode : {DerivativeMode::FiniteDifference, DerivativeMode::ForwardMode}) {
    for (const auto& form : {Formulation::x1fm(), Formulation::edm(), Formulation::ddim()}) {
      Network net(small_config(form), 13);
      randomize_head(net, 14);
      DerivativeConfig dc;
      dc.mode = mode;
      CfmObjective obj(net, form, dc, 6);
      Rng rng(15);
      const Batch b = make_batch(gaussian_data(50, 16), form, {0.0, TimeDistribution::Uniform}, 6, rng);
      obj.loss(b);
      const Mat target = obj.graph().value(obj.target());
      NetworkEvaluator ev(net);
      for (int i = 0; i < 6; ++i) {
        const Vec x1 = b.x1.row(i).transpose();
        const Vec x = sample_conditional(form, x1, b.eps.row(i).transpose(), b.t[i]).x;
        const Vec d = mode == DerivativeMode::ForwardMode
                          ? combined_derivative_jvp(ev, form, x, x1, b.t[i], b.r[i])
                          : combined_derivative_fd(ev, form, x, x1, b.t[i], b.r[i], dc.step(form));
        const Vec want = cfm_target(form, d, x, x1, b.t[i], b.r[i]);
        CHECK((target.row(i).transpose() - want).norm() < 1e-9 * std::max(1.0, want.norm()));
      }
    }
  }
}

TEST_CASE("objective: model tangent moves x along the network's own diagonal field") {
  for (auto mode : {DerivativeMode::FiniteDifference, DerivativeMode::ForwardMode}) {
    const Formulation form = Formulation::edm();
    Network net(small_config(form), 31);
    randomize_head(net, 32);
    DerivativeConfig dc;
    dc.mode = mode;
    dc.tangent = Tangent::Model;
    CfmObjective obj(net, form, dc, 5);
    Rng rng(33);
    const Batch b = make_batch(gaussian_data(50, 34), form, {0.0, TimeDistribution::Uniform}, 5, rng);
    obj.loss(b);
    const Mat target = obj.graph().value(obj.target());
    NetworkEvaluator ev(net);
    for (int i = 0; i < 5; ++i) {
      const Vec x1 = b.x1.row(i).transpose();
      const Vec x = sample_conditional(form, x1, b.eps.row(i).transpose(), b.t[i]).x;
      const Vec m = ev.forward(x, b.t[i], b.t[i]);
      Vec d;
      if (mode == DerivativeMode::ForwardMode) {
        const Mat dir = partial4_f_diagonal(form, m, x, b.t[i]).transpose();
        d = ev.forward_jvp(Mat(x.transpose()), Vec::Constant(1, b.t[i]), Vec::Constant(1, b.r[i]), dir, Vec::Ones(1))
                .second.row(0)
                .transpose();
      } else {
        const double h = dc.step(form);
        d = (ev.forward(instantaneous_step(form, m, x, b.t[i], h), b.t[i] + h, b.r[i]) - ev.forward(x, b.t[i], b.r[i])) / h;
      }
      const Vec want = cfm_target(form, d, x, x1, b.t[i], b.r[i]);
      CHECK((target.row(i).transpose() - want).norm() < 1e-9 * std::max(1.0, want.norm()));
    }
  }
  CHECK(parse_tangent("model") == Tangent::Model);
  CHECK(tangent_name(Tangent::Conditional) == "conditional");
  CHECK_THROWS_AS(parse_tangent("exact"), ConfigError);
}

TEST_CASE("objective: on the diagonal the full loss equals the instantaneous-only loss") {
  const Formulation form = Formulation::edm();
  Network a(small_config(form), 17);
  randomize_head(a, 18);
  Network b = a;
  CfmObjective full(a, form, DerivativeConfig{}, 12);
  CfmObjective inst(b, form, DerivativeConfig{}, 12, true);
  Rng rng(19);
  const Batch batch = make_batch(gaussian_data(40, 20), form, {1.0, TimeDistribution::Uniform}, 12, rng);
  CHECK(full.loss_and_gradient(batch) == inst.loss_and_gradient(batch));
  for (std::size_t k = 0; k < a.parameter_count(); ++k) CHECK(full.gradients()[k] == inst.gradients()[k]);
}

TEST_CASE("objective: singular items are masked and counted") {
  const Formulation form = Formulation::x1fm();
  Network net(small_config(form), 21);
  CfmObjective obj(net, form, DerivativeConfig{}, 4);
  Batch b;
  b.x1 = Mat::Ones(4, 2);
  b.eps = Mat::Zero(4, 2);
  b.t = Vec::Constant(4, 0.5);
  b.r = Vec::Constant(4, 0.5);
  b.t[3] = 1.0;
  b.r[3] = 1.0;
  const double l = obj.loss(b);
  CHECK(obj.rejected() == 1);
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(2.0));
  CHECK_THROWS_AS(obj.loss(Batch{Mat::Ones(3, 2), Mat::Zero(3, 2), Vec::Zero(3), Vec::Zero(3)}), ShapeError);
}

TEST_CASE("trainer: zero learning rate leaves parameters unchanged") {
  const Formulation form = Formulation::ufm();
  TrainConfig c = small_train(form);
  c.learning_rate = 0.0;
  Network net(small_config(form), 22);
  Trainer tr(c, net);
  const Mat data = gaussian_data(64, 23);
  for (int i = 0; i < 5; ++i) tr.train_step(data);
  for (std::size_t k = 0; k < net.parameter_count(); ++k) CHECK(tr.network().parameter(k) == net.parameter(k));
}

TEST_CASE("trainer: a small step decreases the loss on its batch") {
  const Formulation form = Formulation::ufm();
  TrainConfig c = small_train(form);
  c.learning_rate = 1e-4;
  c.batch_size = 64;
  Network net(small_config(form), 24);
  randomize_head(net, 25);
  Trainer tr(c, net);
  Rng rng(26);
  const Batch b = make_batch(gaussian_data(256, 27), form, c.sampler, 64, rng);
  const double before = tr.train_step(b);
  CHECK(tr.objective().loss(b) < before);
}

TEST_CASE("trainer: 100 steps are deterministic") {
  const Formulation form = Formulation::ddim();
  const TrainConfig c = small_train(form);
  const Mat data = gaussian_data(128, 28);
  Trainer a(c, Network(small_config(form), 29)), b(c, Network(small_config(form), 29));
  for (int i = 0; i < 100; ++i) REQUIRE(a.train_step(data) == b.train_step(data));
  for (std::size_t k = 0; k < a.network().parameter_count(); ++k) {
    CHECK(a.network().parameter(k) == b.network().parameter(k));
  }
}

TEST_CASE("trainer: non-finite loss raises DivergenceError and keeps parameters") {
  const Formulation form = Formulation::ufm();
  Network net(small_config(form), 30);
  net.parameter("head.w").setConstant(1e200);
  Trainer tr(small_train(form), net);
  CHECK_THROWS_AS(tr.train_step(gaussian_data(16, 31)), DivergenceError);
  for (std::size_t k = 0; k < net.parameter_count(); ++k) CHECK(tr.network().parameter(k) == net.parameter(k));
  CHECK(tr.step() == 0);
}

TEST_CASE("train_loop outputs") {
  const auto dir = std::filesystem::temp_directory_path() / "cfm_test_train_loop";
  std::filesystem::remove_all(dir);
  const Formulation form = Formulation::ufm();
  const Mat data = gaussian_data(64, 32);

  SUBCASE("zero steps writes only the initial checkpoint") {
    TrainConfig c = small_train(form);
    c.steps = 0;
    const TrainResult res = train_loop(c, Network(small_config(form), 33), data, dir);
    CHECK(res.losses.empty());
    REQUIRE(res.checkpoints.size() == 1);
    CHECK(res.checkpoints[0].filename() == "ckpt_00000000.bin");
    std::ifstream csv(dir / "loss.csv");
    std::string header, extra;
    std::getline(csv, header);
    CHECK(header == "step,loss,wallclock_s");
    CHECK(!std::getline(csv, extra));
  }
  SUBCASE("cadence and final checkpoint") {
    TrainConfig c = small_train(form);
    c.steps = 7;
    c.checkpoint_every = 3;
    const TrainResult res = train_loop(c, Network(small_config(form), 34), data, dir);
    CHECK(res.losses.size() == 7);
    REQUIRE(res.checkpoints.size() == 4);
    CHECK(res.checkpoints[3].filename() == "ckpt_00000007.bin");
    CHECK(load_checkpoint(res.checkpoints[3]).step == 7);
    std::ifstream csv(dir / "loss.csv");
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 7);
  }
  SUBCASE("divergence writes last_good.bin") {
    TrainConfig c = small_train(form);
    c.learning_rate = 1e300;
    const TrainResult res = train_loop(c, Network(small_config(form), 35), data, dir);
    CHECK(res.diverged);
    CHECK(res.divergence_step > 0);
    CHECK(res.losses.size() == static_cast<std::size_t>(res.divergence_step));
    CHECK(std::filesystem::exists(dir / "last_good.bin"));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(train_loop(small_train(form), Network(small_config(form, 3), 36), data), ShapeError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("loss curve instability") {
  std::vector<double> steady(500, 1.0);
  CHECK(!loss_curve_unstable(steady));
  std::vector<double> decaying;
  for (int i = 0; i < 500; ++i) decaying.push_back(std::exp(-i / 100.0));
  CHECK(!loss_curve_unstable(decaying));
  std::vector<double> blowup = decaying;
  for (int i = 0; i < 200; ++i) blowup.push_back(10.0);
  CHECK(loss_curve_unstable(blowup));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.sampler.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.steps = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
