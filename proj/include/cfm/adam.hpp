#pragma once

#include "cfm/autodiff.hpp"

#include <vector>

namespace cfm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed list of parameter matrices. Moment buffers are shaped on
// construction; step() expects gradients in the same order and shapes.
class Adam {
 public:
  Adam(AdamConfig config, const std::vector<Mat*>& params);

  void step(const std::vector<const Mat*>& grads);

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  std::vector<Mat*> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long t_ = 0;
};

}  // namespace cfm
