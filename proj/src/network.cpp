#include "cfm/network.hpp"

#include "cfm/error.hpp"
#include "cfm/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace cfm {

std::string_view activation_name(Activation a) { return a == Activation::Silu ? "silu" : "tanh"; }

Activation parse_activation(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "silu") return Activation::Silu;
  if (lower == "tanh") return Activation::Tanh;
  throw ConfigError("activation", "'" + std::string(name) +
                                      "' is not supported; the activation must be continuously "
                                      "differentiable (silu or tanh)");
}

Vec TimeEmbedding::frequencies() const {
  const int half = dim / 2;
  Vec w(half);
  for (int i = 0; i < half; ++i) w[i] = scale * std::pow(base, -static_cast<double>(i) / half);
  return w;
}

Vec TimeEmbedding::embed(double tau) const {
  const Vec w = frequencies();
  Vec e(dim);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    e[2 * i] = std::sin(w[i] * tau);
    e[2 * i + 1] = std::cos(w[i] * tau);
  }
  return e;
}

void NetworkConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("input_dim", "must be positive");
  if (hidden.empty()) throw ConfigError("hidden", "needs at least one hidden layer");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("hidden", "layer widths must be positive");
  }
  if (embedding.dim <= 0 || embedding.dim % 2 != 0) throw ConfigError("embed_dim", "must be even and positive");
  if (!(embedding.base > 0.0)) throw ConfigError("embed_base", "must be positive");
  if (!(embedding.scale > 0.0)) throw ConfigError("embed_scale", "must be positive");
  if (!(time_span != 0.0) || !std::isfinite(time_span)) throw ConfigError("time_span", "must be nonzero");
}

void Network::create_layout() {
  const int half = config_.embedding.dim / 2;
  const int width = config_.hidden.front();
  auto add = [&](const std::string& name, int rows, int cols) {
    index_[name] = names_.size();
    names_.push_back(name);
    params_.push_back(Mat::Zero(rows, cols));
  };
  auto embedder = [&](const std::string& p) {
    add(p + ".w1s", half, width);
    add(p + ".w1c", half, width);
    add(p + ".b1", 1, width);
    add(p + ".w2", width, width);
    add(p + ".b2", 1, width);
  };
  embedder("t_embed");
  if (config_.dual_time) embedder("r_embed");
  add("trunk.in.wx", config_.input_dim, config_.hidden[0]);
  add("trunk.in.we", width, config_.hidden[0]);
  add("trunk.in.b", 1, config_.hidden[0]);
  for (std::size_t k = 1; k < config_.hidden.size(); ++k) {
    const std::string p = "trunk.h" + std::to_string(k);
    add(p + ".w", config_.hidden[k - 1], config_.hidden[k]);
    add(p + ".b", 1, config_.hidden[k]);
  }
  add("head.w", config_.hidden.back(), config_.input_dim);
  add("head.b", 1, config_.input_dim);
}

Network::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  create_layout();
  Rng rng(seed, 0x6e6574);
  const int width = config_.hidden.front();
  auto fan_in = [&](const std::string& name) -> int {
    if (name.find(".w1") != std::string::npos || name.ends_with(".b1")) return config_.embedding.dim;
    if (name.ends_with(".w2") || name.ends_with(".b2")) return width;
    if (name.starts_with("trunk.in")) return config_.input_dim + width;
    const auto& p = params_[index_.at(name)];
    if (name.ends_with(".w")) return static_cast<int>(p.rows());
    return static_cast<int>(params_[index_.at(name.substr(0, name.size() - 2) + ".w")].rows());
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (names_[i].starts_with("head.")) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(names_[i])));
    Mat& p = params_[i];
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = rng.uniform(-bound, bound);
    }
  }
}

Network::Network(NetworkConfig config, std::vector<std::pair<std::string, Mat>> params) : config_(std::move(config)) {
  config_.validate();
  create_layout();
  if (params.size() != params_.size()) {
    throw ConfigError("parameters", "expected " + std::to_string(params_.size()) + " arrays, got " +
                                        std::to_string(params.size()));
  }
  for (auto& [name, value] : params) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("parameters", "unexpected array '" + name + "'");
    Mat& slot = params_[it->second];
    if (slot.rows() != value.rows() || slot.cols() != value.cols()) {
      throw ConfigError("parameters", "array '" + name + "' has shape " + std::to_string(value.rows()) + "x" +
                                          std::to_string(value.cols()) + ", expected " +
                                          std::to_string(slot.rows()) + "x" + std::to_string(slot.cols()));
    }
    slot = std::move(value);
  }
}

Mat& Network::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("parameters", "no array named '" + name + "'");
  return params_[it->second];
}

const Mat& Network::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("parameters", "no array named '" + name + "'");
  return params_[it->second];
}

std::vector<Mat*> Network::parameter_pointers() {
  std::vector<Mat*> out;
  out.reserve(params_.size());
  for (Mat& p : params_) out.push_back(&p);
  return out;
}

std::size_t Network::scalar_count() const {
  std::size_t n = 0;
  for (const Mat& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

ad::Var Network::act(ad::Graph& g, ad::Var v) const {
  return config_.activation == Activation::Silu ? g.silu(v) : g.tanh(v);
}

ad::Var Network::embedder(ad::Graph& g, const std::string& prefix, ad::Var t) {
  Mat inv(1, 1), shift(1, 1);
  inv(0, 0) = 1.0 / config_.time_span;
  shift(0, 0) = -config_.time_origin / config_.time_span;
  const ad::Var tau = g.affine(t, g.constant(inv), g.constant(shift));
  const ad::Var angles = g.matmul(tau, g.constant(config_.embedding.frequencies().transpose()));
  auto P = [&](const char* suffix) { return g.parameter(parameter(prefix + suffix), prefix + suffix); };
  const ad::Var pre = g.add(g.affine(g.sin(angles), P(".w1s"), P(".b1")), g.matmul(g.cos(angles), P(".w1c")));
  return g.affine(act(g, pre), P(".w2"), P(".b2"));
}

ad::Var Network::build_embedding(ad::Graph& g, ad::Var t, ad::Var r) {
  const ad::Var et = embedder(g, "t_embed", t);
  if (!config_.dual_time) return et;
  const ad::Var er = embedder(g, "r_embed", r);
  return g.scale(g.add(et, er), 0.5);
}

ad::Var Network::build(ad::Graph& g, ad::Var x, ad::Var t, ad::Var r) {
  const ad::Var emb = build_embedding(g, t, r);
  auto P = [&](const std::string& name) { return g.parameter(parameter(name), name); };
  ad::Var h = act(g, g.add(g.affine(x, P("trunk.in.wx"), P("trunk.in.b")), g.matmul(emb, P("trunk.in.we"))));
  for (std::size_t k = 1; k < config_.hidden.size(); ++k) {
    const std::string p = "trunk.h" + std::to_string(k);
    h = act(g, g.affine(h, P(p + ".w"), P(p + ".b")));
  }
  return g.affine(h, P("head.w"), P("head.b"));
}

Network init_from_multistep(const NetworkConfig& target, const Network& source) {
  const NetworkConfig& s = source.config();
  std::vector<std::string> diffs;
  if (s.dual_time) diffs.push_back("source already has an r-embedder");
  if (!target.dual_time) diffs.push_back("target must have an r-embedder");
  if (s.input_dim != target.input_dim) {
    diffs.push_back("input_dim " + std::to_string(s.input_dim) + " vs " + std::to_string(target.input_dim));
  }
  const std::size_t layers = std::max(s.hidden.size(), target.hidden.size());
  for (std::size_t k = 0; k < layers; ++k) {
    const int a = k < s.hidden.size() ? s.hidden[k] : 0;
    const int b = k < target.hidden.size() ? target.hidden[k] : 0;
    if (a != b) {
      diffs.push_back("hidden layer " + std::to_string(k) + " width " + std::to_string(a) + " vs " + std::to_string(b));
    }
  }
  if (!(s.embedding.dim == target.embedding.dim && s.embedding.base == target.embedding.base &&
        s.embedding.scale == target.embedding.scale)) {
    diffs.push_back("time embedding encoding differs");
  }
  if (s.activation != target.activation) diffs.push_back("activation differs");
  if (s.time_origin != target.time_origin || s.time_span != target.time_span) {
    diffs.push_back("time normalization differs");
  }
  if (!diffs.empty()) {
    std::string msg = "architecture mismatch:";
    for (const auto& d : diffs) msg += "\n  - " + d;
    throw ConfigError("init_from", msg);
  }

  std::vector<std::pair<std::string, Mat>> params;
  for (std::size_t i = 0; i < source.parameter_count(); ++i) {
    const std::string& name = source.parameter_name(i);
    params.emplace_back(name, source.parameter(i));
    if (name.starts_with("t_embed.")) params.emplace_back("r_embed." + name.substr(8), source.parameter(i));
  }
  return Network(target, std::move(params));
}

NetworkEvaluator::Cached& NetworkEvaluator::graph_for(Eigen::Index rows) {
  auto it = cache_.find(rows);
  if (it != cache_.end()) return it->second;
  Cached c;
  c.x = c.graph.input(rows, net_->config().input_dim, "x");
  c.t = c.graph.input(rows, 1, "t");
  c.r = c.graph.input(rows, 1, "r");
  c.out = net_->build(c.graph, c.x, c.t, c.r);
  return cache_.emplace(rows, std::move(c)).first->second;
}

Mat NetworkEvaluator::forward(const Mat& x, const Vec& t, const Vec& r) {
  if (x.cols() != net_->config().input_dim) {
    throw ShapeError("forward: expected state dimension " + std::to_string(net_->config().input_dim) + ", got " +
                     std::to_string(x.cols()));
  }
  if (t.size() != x.rows() || r.size() != x.rows()) throw ShapeError("forward: one time per sample required");
  if (x.rows() == 0) return Mat(0, x.cols());
  Cached& c = graph_for(x.rows());
  const Mat inputs[3] = {x, t, r};
  c.graph.evaluate(inputs);
  return c.graph.value(c.out);
}

Vec NetworkEvaluator::forward(const Vec& x, double t, double r) {
  const Mat out = forward(Mat(x.transpose()), Vec::Constant(1, t), Vec::Constant(1, r));
  return out.row(0).transpose();
}

std::pair<Mat, Mat> NetworkEvaluator::forward_jvp(const Mat& x, const Vec& t, const Vec& r, const Mat& dx,
                                                  const Vec& dt) {
  if (dx.rows() != x.rows() || dx.cols() != x.cols() || dt.size() != t.size()) {
    throw ShapeError("forward_jvp: tangent shapes must match the inputs");
  }
  Mat out = forward(x, t, r);
  if (x.rows() == 0) return {out, out};
  Cached& c = graph_for(x.rows());
  const Mat tangents[3] = {dx, dt, Mat()};
  const ad::Var outs[1] = {c.out};
  auto tan = c.graph.jvp(tangents, outs);
  return {std::move(out), std::move(tan[0])};
}

}  // namespace cfm
