#pragma once

// The learnable cumulative field m_theta(x, t, r): an MLP trunk conditioned on
// the mean of two learned time embeddings, (emb_t(t) + emb_r(r)) / 2.
//
// Each embedder maps a sinusoidal encoding of the normalized time through a
// two-layer MLP. A single-time model (dual_time = false) has only the
// t-embedder and conditions on emb_t(t); it is the multi-step model that
// init_from_multistep() converts into a two-time model.

#include "cfm/autodiff.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cfm {

enum class Activation { Silu, Tanh };

std::string_view activation_name(Activation a);
// Accepts "silu" and "tanh". Anything else (relu, ...) is rejected: the loss
// differentiates the network in (x, t), so the activation must be C1.
Activation parse_activation(std::string_view name);

// Sinusoidal encoding of a normalized time tau:
//   [sin(w_0 tau), cos(w_0 tau), sin(w_1 tau), cos(w_1 tau), ...],
//   w_i = scale * base^(-i / (dim / 2)).
struct TimeEmbedding {
  int dim = 64;
  double base = 1e4;
  double scale = 30.0;

  Vec frequencies() const;
  Vec embed(double tau) const;
  bool operator==(const TimeEmbedding&) const = default;
};

struct NetworkConfig {
  int input_dim = 2;
  std::vector<int> hidden = {256, 256, 256, 256};
  TimeEmbedding embedding{};
  Activation activation = Activation::Silu;
  bool dual_time = true;
  // tau = (t - time_origin) / time_span maps the time domain onto [0, 1].
  double time_origin = 0.0;
  double time_span = 1.0;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

class Network {
 public:
  // Random initialization; the output head is zero so the initial field is 0.
  Network(NetworkConfig config, std::uint64_t seed);
  // Adopts existing parameter values; names and shapes must match the layout.
  Network(NetworkConfig config, std::vector<std::pair<std::string, Mat>> params);

  const NetworkConfig& config() const { return config_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::string& parameter_name(std::size_t i) const { return names_[i]; }
  Mat& parameter(std::size_t i) { return params_[i]; }
  const Mat& parameter(std::size_t i) const { return params_[i]; }
  Mat& parameter(const std::string& name);
  const Mat& parameter(const std::string& name) const;
  std::vector<Mat*> parameter_pointers();
  std::size_t scalar_count() const;

  // Adds the forward computation to `graph`. x: Bxinput_dim, t and r: Bx1
  // raw times. Single-time networks ignore r. Parameters are bound to this
  // object's storage, so the network must outlive the graph and stay put.
  ad::Var build(ad::Graph& graph, ad::Var x, ad::Var t, ad::Var r);

  // Embedding vector fed to the trunk, same shape rules as build().
  ad::Var build_embedding(ad::Graph& graph, ad::Var t, ad::Var r);

 private:
  void create_layout();
  ad::Var embedder(ad::Graph& graph, const std::string& prefix, ad::Var t);
  ad::Var act(ad::Graph& graph, ad::Var v) const;

  NetworkConfig config_;
  std::vector<std::string> names_;
  std::vector<Mat> params_;
  std::map<std::string, std::size_t> index_;
};

// Builds a two-time network from a single-time one: trunk and t-embedder are
// copied, the r-embedder starts as a copy of the t-embedder. Throws
// ConfigError listing every architectural difference if `target` does not
// describe the same architecture.
Network init_from_multistep(const NetworkConfig& target, const Network& source);

// Plain evaluation with graphs cached per batch size.
class NetworkEvaluator {
 public:
  explicit NetworkEvaluator(Network& net) : net_(&net) {}

  // Rows of x are samples; t and r hold one time per row.
  Mat forward(const Mat& x, const Vec& t, const Vec& r);
  Vec forward(const Vec& x, double t, double r);

  // Output and its directional derivative along (dx, dt) with r fixed.
  std::pair<Mat, Mat> forward_jvp(const Mat& x, const Vec& t, const Vec& r, const Mat& dx, const Vec& dt);

  Network& network() { return *net_; }

 private:
  struct Cached {
    ad::Graph graph;
    ad::Var x, t, r, out;
  };
  Cached& graph_for(Eigen::Index rows);

  Network* net_;
  std::map<Eigen::Index, Cached> cache_;
};

}  // namespace cfm
