#include "cfm/training.hpp"

#include "cfm/checkpoint.hpp"
#include "cfm/error.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>

namespace cfm {

std::string_view time_distribution_name(TimeDistribution d) {
  return d == TimeDistribution::Uniform ? "uniform" : "log_uniform";
}

TimeDistribution parse_time_distribution(std::string_view name) {
  if (name == "uniform") return TimeDistribution::Uniform;
  if (name == "log_uniform") return TimeDistribution::LogUniform;
  throw ConfigError("time_distribution", "unknown value '" + std::string(name) + "' (uniform, log_uniform)");
}

std::string_view tangent_name(Tangent t) { return t == Tangent::Conditional ? "conditional" : "model"; }

Tangent parse_tangent(std::string_view name) {
  if (name == "conditional") return Tangent::Conditional;
  if (name == "model") return Tangent::Model;
  throw ConfigError("tangent", "unknown value '" + std::string(name) + "' (conditional, model)");
}

namespace {

double draw_tau(TimeDistribution base, Rng& rng) {
  const double u = rng.uniform();
  if (base == TimeDistribution::Uniform) return u;
  return 1.0 - std::pow(10.0, -3.0 * u);
}

}  // namespace

std::pair<double, double> sample_times(const TimeSampler& sampler, const Formulation& form, Rng& rng) {
  const double gate = rng.uniform();
  double ta = draw_tau(sampler.base, rng);
  double tb = draw_tau(sampler.base, rng);
  if (gate < sampler.alpha) tb = ta;
  if (tb < ta) std::swap(ta, tb);
  return {form.clamp(form.denormalize(ta)), form.clamp(form.denormalize(tb))};
}

void DerivativeConfig::validate() const {
  if (!(h_fraction > 0.0) || h_fraction > 0.5) throw ConfigError("fd_h", "must lie in (0, 0.5]");
}

namespace {

void check_batch_shapes(const char* what, const Mat& x, const Mat& x1, const Vec& t, const Vec& r) {
  if (x.rows() != x1.rows() || x.cols() != x1.cols()) throw ShapeError(std::string(what) + ": x and x1 differ in shape");
  if (t.size() != x.rows() || r.size() != x.rows()) throw ShapeError(std::string(what) + ": one time per row required");
}

// Instantaneous step size actually usable from t: h, or h/2, or DomainError.
double usable_step(const Formulation& form, double t, double h) {
  if (form.contains(t + h)) return h;
  if (form.contains(t + 0.5 * h)) return 0.5 * h;
  throw DomainError(std::string(form.name()) + ": finite-difference step from t=" + std::to_string(t) +
                    " leaves the time domain");
}

}  // namespace

Mat combined_derivative_fd(NetworkEvaluator& net, const Formulation& form, const Mat& x, const Mat& x1,
                           const Vec& t, const Vec& r, double h) {
  check_batch_shapes("combined_derivative_fd", x, x1, t, r);
  Mat psi(x.rows(), x.cols());
  Vec s(x.rows()), hs(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vec xi = x.row(i).transpose();
    const Vec m = conditional_instantaneous(form, xi, x1.row(i).transpose(), t[i]);
    hs[i] = usable_step(form, t[i], h);
    s[i] = t[i] + hs[i];
    psi.row(i) = instantaneous_step(form, m, xi, t[i], hs[i]).transpose();
  }
  const Mat base = net.forward(x, t, r);
  const Mat moved = net.forward(psi, s, r);
  return (moved - base).array().colwise() / hs.array();
}

Vec combined_derivative_fd(NetworkEvaluator& net, const Formulation& form, const Vec& x, const Vec& x1, double t,
                           double r, double h) {
  const Mat out = combined_derivative_fd(net, form, Mat(x.transpose()), Mat(x1.transpose()), Vec::Constant(1, t),
                                         Vec::Constant(1, r), h);
  return out.row(0).transpose();
}

Mat combined_derivative_jvp(NetworkEvaluator& net, const Formulation& form, const Mat& x, const Mat& x1,
                            const Vec& t, const Vec& r) {
  check_batch_shapes("combined_derivative_jvp", x, x1, t, r);
  Mat dir(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vec xi = x.row(i).transpose();
    const Vec m = conditional_instantaneous(form, xi, x1.row(i).transpose(), t[i]);
    dir.row(i) = partial4_f_diagonal(form, m, xi, t[i]).transpose();
  }
  return net.forward_jvp(x, t, r, dir, Vec::Ones(x.rows())).second;
}

Vec combined_derivative_jvp(NetworkEvaluator& net, const Formulation& form, const Vec& x, const Vec& x1, double t,
                            double r) {
  const Mat out = combined_derivative_jvp(net, form, Mat(x.transpose()), Mat(x1.transpose()), Vec::Constant(1, t),
                                          Vec::Constant(1, r));
  return out.row(0).transpose();
}

Batch make_batch(const Mat& data, const Formulation& form, const TimeSampler& sampler, Eigen::Index size, Rng& rng) {
  if (data.rows() == 0) throw ShapeError("make_batch: empty dataset");
  Batch b;
  b.x1.resize(size, data.cols());
  b.eps.resize(size, data.cols());
  b.t.resize(size);
  b.r.resize(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    b.x1.row(i) = data.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.rows()))));
    for (Eigen::Index d = 0; d < data.cols(); ++d) b.eps(i, d) = rng.normal();
    std::tie(b.t[i], b.r[i]) = sample_times(sampler, form, rng);
  }
  return b;
}

CfmObjective::CfmObjective(Network& net, Formulation form, DerivativeConfig deriv, Eigen::Index batch_size,
                           bool instantaneous_only)
    : net_(&net),
      form_(form),
      deriv_(deriv),
      batch_size_(batch_size),
      instantaneous_only_(instantaneous_only),
      helper_(net) {
  deriv_.validate();
  if (batch_size <= 0) throw ConfigError("batch_size", "must be positive");
  const Eigen::Index D = net.config().input_dim;
  ad::Graph& g = graph_;
  x_ = g.input(batch_size, D, "x");
  t_ = g.input(batch_size, 1, "t");
  r_ = g.input(batch_size, 1, "r");
  mcond_ = g.input(batch_size, D, "m_cond");
  mask_ = g.input(batch_size, D, "mask");
  pred_ = net.build(g, x_, t_, r_);
  if (instantaneous_only_) {
    target_ = mcond_;
  } else {
    coef_ = g.input(batch_size, D, "coef");
    ad::Var dcomb;
    if (deriv_.mode == DerivativeMode::FiniteDifference) {
      psi_ = g.input(batch_size, D, "psi");
      s_ = g.input(batch_size, 1, "s");
      inv_h_ = g.input(batch_size, D, "inv_h");
      const ad::Var moved = net.build(g, psi_, s_, r_);
      dcomb = g.mul(g.sub(moved, pred_), inv_h_);
    } else {
      dcomb_in_ = g.input(batch_size, D, "dcomb");
      dcomb = dcomb_in_;
    }
    target_ = g.add(mcond_, g.mul(coef_, dcomb));
  }
  loss_ = g.sum(g.mul(g.square(g.sub(pred_, g.detach(target_))), mask_));

  for (const ad::Var& p : g.parameters()) {
    const Mat* storage = &g.parameter_storage(p);
    std::size_t k = 0;
    while (k < net.parameter_count() && &net.parameter(k) != storage) ++k;
    param_index_.push_back(k);
  }
  grads_.resize(net.parameter_count());
  for (std::size_t k = 0; k < net.parameter_count(); ++k) grads_[k] = Mat::Zero(net.parameter(k).rows(), net.parameter(k).cols());
}

std::vector<Mat> CfmObjective::prepare(const Batch& batch) {
  const Eigen::Index B = batch_size_;
  const Eigen::Index D = net_->config().input_dim;
  if (batch.size() != B || batch.x1.cols() != D || batch.eps.rows() != B || batch.eps.cols() != D ||
      batch.t.size() != B || batch.r.size() != B) {
    throw ShapeError("CfmObjective: batch must hold " + std::to_string(B) + " rows of dimension " + std::to_string(D));
  }
  Mat x(B, D), mcond(B, D), coef = Mat::Zero(B, D), mask = Mat::Zero(B, D);
  Mat psi(B, D), inv_h = Mat::Zero(B, D);
  Vec s(B);
  std::vector<char> valid(static_cast<std::size_t>(B), 0);
  const double h = deriv_.step(form_);
  long n_valid = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    x.row(i) = sample_conditional(form_, batch.x1.row(i).transpose(), batch.eps.row(i).transpose(), batch.t[i]).x.transpose();
  }
  const bool model_tangent = !instantaneous_only_ && deriv_.tangent == Tangent::Model;
  Mat direction_field = model_tangent ? helper_.forward(x, batch.t, batch.t) : Mat(Mat::Zero(B, D));
  for (Eigen::Index i = 0; i < B; ++i) {
    const double t = batch.t[i], r = batch.r[i];
    const Vec x1 = batch.x1.row(i).transpose();
    const Vec xi = x.row(i).transpose();
    psi.row(i) = xi.transpose();
    s[i] = t;
    try {
      const Vec m = conditional_instantaneous(form_, xi, x1, t);
      mcond.row(i) = m.transpose();
      if (!instantaneous_only_) {
        coef.row(i).setConstant(target_derivative_coefficient(form_, t, r));
        if (!model_tangent) direction_field.row(i) = m.transpose();
        if (deriv_.mode == DerivativeMode::FiniteDifference) {
          const double hi = usable_step(form_, t, h);
          psi.row(i) = instantaneous_step(form_, direction_field.row(i).transpose(), xi, t, hi).transpose();
          s[i] = t + hi;
          inv_h.row(i).setConstant(1.0 / hi);
        }
      }
      valid[static_cast<std::size_t>(i)] = 1;
      ++n_valid;
    } catch (const DomainError&) {
      mcond.row(i).setZero();
      coef.row(i).setZero();
    }
  }
  rejected_ = B - n_valid;
  if (n_valid > 0) {
    for (Eigen::Index i = 0; i < B; ++i) {
      if (valid[static_cast<std::size_t>(i)]) mask.row(i).setConstant(1.0 / static_cast<double>(n_valid));
    }
  }

  std::vector<Mat> in;
  in.push_back(x);
  in.push_back(batch.t);
  in.push_back(batch.r);
  in.push_back(mcond);
  in.push_back(mask);
  if (!instantaneous_only_) {
    in.push_back(coef);
    if (deriv_.mode == DerivativeMode::FiniteDifference) {
      in.push_back(psi);
      in.push_back(s);
      in.push_back(inv_h);
    } else {
      Mat dir = Mat::Zero(B, D);
      for (Eigen::Index i = 0; i < B; ++i) {
        if (valid[static_cast<std::size_t>(i)]) {
          dir.row(i) = partial4_f_diagonal(form_, direction_field.row(i).transpose(), x.row(i).transpose(), batch.t[i])
                           .transpose();
        }
      }
      Mat dcomb = helper_.forward_jvp(x, batch.t, batch.r, dir, Vec::Ones(B)).second;
      for (Eigen::Index i = 0; i < B; ++i) {
        if (!valid[static_cast<std::size_t>(i)]) dcomb.row(i).setZero();
      }
      in.push_back(std::move(dcomb));
    }
  }
  return in;
}

double CfmObjective::loss(const Batch& batch) {
  inputs_ = prepare(batch);
  graph_.evaluate(inputs_);
  return graph_.value(loss_)(0, 0);
}

double CfmObjective::loss_and_gradient(const Batch& batch) {
  const double l = loss(batch);
  for (Mat& g : grads_) g.setZero();
  if (!std::isfinite(l)) return l;
  graph_.backward(loss_);
  const auto& params = graph_.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (param_index_[k] < grads_.size()) grads_[param_index_[k]] += graph_.grad(params[k]);
  }
  return l;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("lr", "must be finite and >= 0");
  if (batch_size <= 0) throw ConfigError("batch_size", "must be positive");
  if (steps < 0) throw ConfigError("steps", "must be >= 0");
  if (!(sampler.alpha >= 0.0 && sampler.alpha <= 1.0)) throw ConfigError("alpha", "must lie in [0, 1]");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be >= 0");
  derivative.validate();
}

Trainer::Trainer(const TrainConfig& config, Network network)
    : config_(config),
      net_(std::move(network)),
      adam_(AdamConfig{.learning_rate = config.learning_rate}, net_.parameter_pointers()),
      objective_(net_, config.formulation, config.derivative, config.batch_size, config.sampler.alpha == 1.0) {
  config_.validate();
  for (const Mat& g : objective_.gradients()) grad_ptrs_.push_back(&g);
}

double Trainer::train_step(const Batch& batch) {
  const double l = objective_.loss_and_gradient(batch);
  if (!std::isfinite(l)) throw DivergenceError(step_, "non-finite loss at step " + std::to_string(step_));
  for (std::size_t k = 0; k < grad_ptrs_.size(); ++k) {
    if (!grad_ptrs_[k]->allFinite()) {
      throw DivergenceError(step_, "non-finite gradient for '" + net_.parameter_name(k) + "' at step " +
                                       std::to_string(step_));
    }
  }
  adam_.step(grad_ptrs_);
  ++step_;
  return l;
}

double Trainer::train_step(const Mat& data) {
  Rng rng = Rng(config_.seed, 0x747261696eULL).split(static_cast<std::uint64_t>(step_));
  const Batch batch = make_batch(data, config_.formulation, config_.sampler, config_.batch_size, rng);
  return train_step(batch);
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08ld.bin", step);
  return dir / buf;
}

}  // namespace

TrainResult train_loop(const TrainConfig& config, Network network, const Mat& data,
                       const std::optional<std::filesystem::path>& out_dir, std::ostream* log) {
  config.validate();
  if (data.cols() != network.config().input_dim) {
    throw ShapeError("train: dataset dimension " + std::to_string(data.cols()) + " does not match network input " +
                     std::to_string(network.config().input_dim));
  }
  auto trainer = std::make_unique<Trainer>(config, std::move(network));
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(config.steps));
  std::vector<std::filesystem::path> checkpoints;
  std::ofstream csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    csv.open(*out_dir / "loss.csv");
    if (!csv) throw IoError("cannot write " + (*out_dir / "loss.csv").string());
    csv << "step,loss,wallclock_s\n";
    checkpoints.push_back(checkpoint_path(*out_dir, 0));
    save_checkpoint(checkpoints.back(), trainer->network(), config.formulation, 0);
  }
  const auto start = std::chrono::steady_clock::now();
  bool diverged = false;
  long divergence_step = -1;
  for (long k = 0; k < config.steps; ++k) {
    double l = 0.0;
    try {
      l = trainer->train_step(data);
    } catch (const DivergenceError& e) {
      diverged = true;
      divergence_step = e.step();
      if (log) *log << "diverged: " << e.what() << "\n";
      if (out_dir) {
        checkpoints.push_back(*out_dir / "last_good.bin");
        save_checkpoint(checkpoints.back(), trainer->network(), config.formulation, trainer->step());
      }
      break;
    }
    losses.push_back(l);
    const long step = trainer->step();
    if (csv.is_open()) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[96];
      std::snprintf(buf, sizeof buf, "%ld,%.10g,%.3f\n", step, l, secs);
      csv << buf;
    }
    if (log && config.log_every > 0 && step % config.log_every == 0) {
      *log << "step " << step << " loss " << l << "\n";
    }
    if (out_dir && ((config.checkpoint_every > 0 && step % config.checkpoint_every == 0) || step == config.steps)) {
      checkpoints.push_back(checkpoint_path(*out_dir, step));
      save_checkpoint(checkpoints.back(), trainer->network(), config.formulation, step);
    }
  }
  if (csv.is_open()) {
    csv.flush();
    if (!csv) throw IoError("failed writing loss.csv");
  }
  TrainResult result{trainer->network(), std::move(losses), std::move(checkpoints), diverged, divergence_step, false};
  result.unstable = loss_curve_unstable(result.losses);
  return result;
}

bool loss_curve_unstable(const std::vector<double>& losses, std::size_t window, double factor) {
  if (losses.empty() || window == 0) return false;
  window = std::min(window, losses.size());
  double acc = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    acc += losses[i];
    if (i >= window) acc -= losses[i - window];
    if (i + 1 < window) continue;
    const double avg = acc / static_cast<double>(window);
    if (!std::isfinite(avg)) return true;
    best = std::min(best, avg);
    if (avg > factor * best) return true;
  }
  return false;
}

}  // namespace cfm
