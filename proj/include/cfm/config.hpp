#pragma once

// Run configuration as sectioned `key = value` text:
//
//   [formulation]  kind (required), ddim_T, ddim_beta0, ddim_betaT, edm_sigma_min, edm_sigma_max
//   [network]      hidden, embed_dim, embed_base, embed_scale, activation, dual_time
//   [training]     lr, batch_size, steps, alpha, time_distribution, derivative, tangent, fd_h,
//                  checkpoint_every, log_every, init_from
//   [dataset]      id, n
//   [sampler]      steps, samples
//   [run]          seed, out_dir
//
// '#' and ';' start comments. Unknown sections or keys are errors.

#include "cfm/formulation.hpp"
#include "cfm/network.hpp"
#include "cfm/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cfm {

struct Config {
  std::optional<Kind> kind;
  DdimSchedule ddim{};
  EdmParams edm{};

  std::vector<int> hidden = {256, 256, 256, 256};
  TimeEmbedding embedding{};
  Activation activation = Activation::Silu;
  bool dual_time = true;

  double lr = 1e-3;
  int batch_size = 256;
  long steps = 20000;
  double alpha = 0.5;
  TimeDistribution time_distribution = TimeDistribution::Uniform;
  DerivativeMode derivative = DerivativeMode::FiniteDifference;
  Tangent tangent = Tangent::Conditional;
  double fd_h = 1e-3;
  long checkpoint_every = 0;
  long log_every = 0;
  std::string init_from;

  std::string dataset = "two_moons";
  long dataset_n = 65536;

  int sample_steps = 4;
  long samples = 10000;

  std::uint64_t seed = 0;
  std::string out_dir = "run";

  bool operator==(const Config&) const = default;

  // Throws ConfigError naming the field.
  void validate() const;
  Formulation formulation() const;
  NetworkConfig network_config() const;
  TrainConfig train_config() const;
};

Config parse_config(const std::string& text);
std::string serialize_config(const Config& config);
Config load_config(const std::filesystem::path& path);

}  // namespace cfm
