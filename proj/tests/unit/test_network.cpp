#include "cfm/error.hpp"
#include "cfm/network.hpp"
#include "cfm/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace cfm;

namespace {

NetworkConfig small_config(bool dual = true) {
  NetworkConfig c;
  c.input_dim = 2;
  c.hidden = {16, 16};
  c.embedding.dim = 8;
  c.dual_time = dual;
  return c;
}

void randomize_head(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* name : {"head.w", "head.b"}) {
    Mat& p = net.parameter(name);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal() * 0.3;
  }
}

Mat random_points(Eigen::Index n, Rng& rng) {
  Mat x(n, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("time embedding") {
  TimeEmbedding e;
  const Vec at0 = e.embed(0.0);
  REQUIRE(at0.size() == e.dim);
  for (int i = 0; i < e.dim / 2; ++i) {
    CHECK(at0[2 * i] == 0.0);
    CHECK(at0[2 * i + 1] == 1.0);
  }
  const Vec w = e.frequencies();
  CHECK(w[0] == doctest::Approx(e.scale));
  for (int i = 1; i < w.size(); ++i) CHECK(w[i] < w[i - 1]);
  for (double tau : {0.0, 0.25, 0.5, 0.999}) {
    CHECK((e.embed(tau + 1e-6) - e.embed(tau)).norm() < 1e-3);
  }
}

TEST_CASE("activation parsing") {
  CHECK(parse_activation("silu") == Activation::Silu);
  CHECK(parse_activation("tanh") == Activation::Tanh);
  CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
}

TEST_CASE("config validation") {
  NetworkConfig c = small_config();
  c.embedding.dim = 7;
  CHECK_THROWS_AS(Network(c, 1), ConfigError);
  c = small_config();
  c.hidden.clear();
  CHECK_THROWS_AS(Network(c, 1), ConfigError);
  c = small_config();
  c.time_span = 0.0;
  CHECK_THROWS_AS(Network(c, 1), ConfigError);
}

TEST_CASE("zero head gives the zero field") {
  Network net(small_config(), 3);
  NetworkEvaluator ev(net);
  Rng rng(2);
  const Mat x = random_points(20, rng);
  const Vec t = Vec::Constant(20, 0.3), r = Vec::Constant(20, 0.8);
  CHECK(ev.forward(x, t, r).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("same seed, same network") {
  Network a(small_config(), 11), b(small_config(), 11), c(small_config(), 12);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.parameter_count(); ++i) {
    all_equal = all_equal && a.parameter(i) == b.parameter(i);
    any_diff = any_diff || a.parameter(i) != c.parameter(i);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("tied embedders make the field symmetric in (t, r)") {
  Network single(small_config(false), 5);
  randomize_head(single, 6);
  Network net = init_from_multistep(small_config(true), single);
  NetworkEvaluator ev(net);
  Rng rng(7);
  const Mat x = random_points(50, rng);
  Vec t(50), r(50);
  for (int i = 0; i < 50; ++i) {
    t[i] = rng.uniform();
    r[i] = rng.uniform();
  }
  CHECK((ev.forward(x, t, r) - ev.forward(x, r, t)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init_from_multistep reproduces the multi-step model on the diagonal") {
  Network single(small_config(false), 21);
  randomize_head(single, 22);
  Network dual = init_from_multistep(small_config(true), single);
  CHECK(dual.parameter("r_embed.w2") == single.parameter("t_embed.w2"));
  NetworkEvaluator es(single), ed(dual);
  Rng rng(23);
  const Mat x = random_points(100, rng);
  Vec t(100);
  for (int i = 0; i < 100; ++i) t[i] = rng.uniform();
  CHECK((es.forward(x, t, t) - ed.forward(x, t, t)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init_from_multistep lists every architectural difference") {
  Network single(small_config(false), 1);
  NetworkConfig target = small_config(true);
  target.hidden = {16, 32};
  target.activation = Activation::Tanh;
  try {
    init_from_multistep(target, single);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("hidden layer 1") != std::string::npos);
    CHECK(msg.find("activation") != std::string::npos);
  }
  CHECK_THROWS_AS(init_from_multistep(small_config(true), Network(small_config(true), 1)), ConfigError);
}

TEST_CASE("forward rejects wrong state dimension") {
  Network net(small_config(), 1);
  NetworkEvaluator ev(net);
  CHECK_THROWS_AS(ev.forward(Mat::Zero(4, 3), Vec::Zero(4), Vec::Zero(4)), ShapeError);
  CHECK_THROWS_AS(ev.forward(Mat::Zero(4, 2), Vec::Zero(3), Vec::Zero(4)), ShapeError);
}

TEST_CASE("forward_jvp matches finite differences") {
  Network net(small_config(), 31);
  randomize_head(net, 32);
  NetworkEvaluator ev(net);
  Rng rng(33);
  const Mat x = random_points(10, rng);
  const Mat dx = random_points(10, rng);
  Vec t(10), r(10), dt(10);
  for (int i = 0; i < 10; ++i) {
    t[i] = rng.uniform(0.1, 0.9);
    r[i] = rng.uniform(0.1, 0.9);
    dt[i] = rng.normal();
  }
  const auto [out, tangent] = ev.forward_jvp(x, t, r, dx, dt);
  const double h = 1e-6;
  const Mat fd = (ev.forward(x + h * dx, t + h * dt, r) - ev.forward(x - h * dx, t - h * dt, r)) / (2 * h);
  CHECK((out - ev.forward(x, t, r)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tangent - fd).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
}

TEST_CASE("adopting parameters checks names and shapes") {
  Network net(small_config(), 1);
  std::vector<std::pair<std::string, Mat>> params;
  for (std::size_t i = 0; i < net.parameter_count(); ++i) params.emplace_back(net.parameter_name(i), net.parameter(i));
  Network copy(small_config(), params);
  CHECK(copy.scalar_count() == net.scalar_count());
  params[0].second = Mat::Zero(1, 1);
  CHECK_THROWS_AS(Network(small_config(), params), ConfigError);
  params.pop_back();
  CHECK_THROWS_AS(Network(small_config(), params), ConfigError);
}
