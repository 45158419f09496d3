#pragma once

// Training of the cumulative field: swap-and-mix time sampling, combined
// derivative estimators, the stop-gradient regression loss and the optimizer
// loop.

#include "cfm/adam.hpp"
#include "cfm/formulation.hpp"
#include "cfm/network.hpp"
#include "cfm/rng.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cfm {

// Base distribution T1 over the normalized time domain [0, 1].
enum class TimeDistribution {
  Uniform,
  // tau = 1 - 10^(-3 u) for u ~ U[0,1]: log-uniform in the distance to the
  // data endpoint, over the same clamped range as Uniform.
  LogUniform,
};

std::string_view time_distribution_name(TimeDistribution d);
TimeDistribution parse_time_distribution(std::string_view name);

struct TimeSampler {
  double alpha = 0.5;  // fraction of pairs with r = t
  TimeDistribution base = TimeDistribution::Uniform;
};

// Draws (t, r). With probability alpha r = t; otherwise t and r are drawn
// i.i.d. from the base distribution and swapped so that r is no closer to t0
// than t. Both are clamped into [t0, t_end()].
std::pair<double, double> sample_times(const TimeSampler& sampler, const Formulation& form, Rng& rng);

enum class DerivativeMode { FiniteDifference, ForwardMode };

// Field that sets the x-direction of the combined derivative inside the
// loss: the conditional field m_t(x | x1), or the network's own detached
// diagonal prediction m(x, t, t). Both have the same conditional mean at the
// optimum; the second carries no per-sample noise.
enum class Tangent { Conditional, Model };

std::string_view tangent_name(Tangent t);
Tangent parse_tangent(std::string_view name);

struct DerivativeConfig {
  DerivativeMode mode = DerivativeMode::FiniteDifference;
  Tangent tangent = Tangent::Conditional;
  // Finite-difference step as a fraction of the domain length; the signed
  // step is h_fraction * span * direction.
  double h_fraction = 1e-3;

  double step(const Formulation& form) const { return h_fraction * form.span() * form.direction(); }
  void validate() const;
};

// Combined derivative d_t m_{t->r}(x) + dF/df4[m_t, x, t, t] d_x m_{t->r}(x)
// with m_t the conditional instantaneous field m_t(x | x1).
//
// Finite differences: [m(psi_{t->t+h}(x), t + h, r) - m(x, t, r)] / h with
// psi evaluated through F. If t + h leaves the domain the step is halved
// once; if it still leaves, DomainError.
Mat combined_derivative_fd(NetworkEvaluator& net, const Formulation& form, const Mat& x, const Mat& x1,
                           const Vec& t, const Vec& r, double h);
Vec combined_derivative_fd(NetworkEvaluator& net, const Formulation& form, const Vec& x, const Vec& x1, double t,
                           double r, double h);
// Forward mode: directional derivative of (x, t) -> m(x, t, r) along
// (dF/df4[m_t, x, t, t], 1).
Mat combined_derivative_jvp(NetworkEvaluator& net, const Formulation& form, const Mat& x, const Mat& x1,
                            const Vec& t, const Vec& r);
Vec combined_derivative_jvp(NetworkEvaluator& net, const Formulation& form, const Vec& x, const Vec& x1, double t,
                            double r);

// One minibatch: data endpoints, noise draws and time pairs, one per row.
struct Batch {
  Mat x1;
  Mat eps;
  Vec t;
  Vec r;

  Eigen::Index size() const { return x1.rows(); }
};

Batch make_batch(const Mat& data, const Formulation& form, const TimeSampler& sampler, Eigen::Index size, Rng& rng);

// The surrogate loss
//   mean_i || m(x_i, t_i, r_i) - sg(m_t(x_i | x1_i) + c(t_i, r_i) * dcomb_i) ||^2
// as a graph over the network parameters. With finite differences the
// derivative branch lives inside the graph behind a Detach node; in forward
// mode the derivative is computed first and fed in as an input.
class CfmObjective {
 public:
  // `instantaneous_only` drops the derivative branch; valid only when every
  // batch has r = t.
  CfmObjective(Network& net, Formulation form, DerivativeConfig deriv, Eigen::Index batch_size,
               bool instantaneous_only = false);
  CfmObjective(const CfmObjective&) = delete;
  CfmObjective& operator=(const CfmObjective&) = delete;

  // Graph inputs for a batch. Items whose times are singular are masked out
  // and counted in rejected().
  std::vector<Mat> prepare(const Batch& batch);

  double loss(const Batch& batch);
  double loss_and_gradient(const Batch& batch);

  // Gradient per network parameter (network order) from the last
  // loss_and_gradient() call.
  const std::vector<Mat>& gradients() const { return grads_; }
  long rejected() const { return rejected_; }

  ad::Graph& graph() { return graph_; }
  ad::Var output() const { return loss_; }
  ad::Var prediction() const { return pred_; }
  ad::Var target() const { return target_; }
  const std::vector<Mat>& last_inputs() const { return inputs_; }
  Eigen::Index batch_size() const { return batch_size_; }

 private:
  Network* net_;
  Formulation form_;
  DerivativeConfig deriv_;
  Eigen::Index batch_size_;
  bool instantaneous_only_;
  NetworkEvaluator helper_;
  ad::Graph graph_;
  ad::Var x_, t_, r_, mcond_, coef_, mask_, psi_, s_, inv_h_, dcomb_in_;
  ad::Var pred_, target_, loss_;
  std::vector<std::size_t> param_index_;  // graph parameter -> network parameter
  std::vector<Mat> inputs_;
  std::vector<Mat> grads_;
  long rejected_ = 0;
};

struct TrainConfig {
  Formulation formulation = Formulation::ufm();
  double learning_rate = 1e-3;
  int batch_size = 256;
  long steps = 20000;
  TimeSampler sampler{};
  DerivativeConfig derivative{};
  std::uint64_t seed = 0;
  std::string dataset = "two_moons";
  long checkpoint_every = 0;  // 0: initial and final only
  long log_every = 0;         // 0: silent

  void validate() const;
};

// Optimizer state around one network. Holds graphs bound to the network's
// storage, so it is neither copyable nor movable.
class Trainer {
 public:
  Trainer(const TrainConfig& config, Network network);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One optimizer update on `batch`; returns the loss before the update.
  // Throws DivergenceError (parameters untouched) on a non-finite loss or
  // gradient.
  double train_step(const Batch& batch);
  // Draws the batch for the current step from `data` and trains on it.
  double train_step(const Mat& data);

  Network& network() { return net_; }
  const Network& network() const { return net_; }
  CfmObjective& objective() { return objective_; }
  long step() const { return step_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  Network net_;
  Adam adam_;
  CfmObjective objective_;
  long step_ = 0;
  std::vector<const Mat*> grad_ptrs_;
};

struct TrainResult {
  Network network;
  std::vector<double> losses;
  std::vector<std::filesystem::path> checkpoints;
  bool diverged = false;
  long divergence_step = -1;
  // Smoothed loss rose above 10x its running minimum at some point.
  bool unstable = false;
};

// Runs config.steps updates. With `out_dir`, writes ckpt_<step>.bin at the
// configured cadence (always at step 0 and at the end), loss.csv with
// columns step,loss,wallclock_s, and last_good.bin if training diverges.
TrainResult train_loop(const TrainConfig& config, Network network, const Mat& data,
                       const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                       std::ostream* log = nullptr);

// Moving-average (window) loss exceeding `factor` times its running minimum.
bool loss_curve_unstable(const std::vector<double>& losses, std::size_t window = 100, double factor = 10.0);

}  // namespace cfm
