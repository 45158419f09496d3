#include "cfm/adam.hpp"

#include "cfm/error.hpp"

#include <cmath>

namespace cfm {

Adam::Adam(AdamConfig config, const std::vector<Mat*>& params) : config_(config), params_(params) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Mat* p : params_) {
    m_.push_back(Mat::Zero(p->rows(), p->cols()));
    v_.push_back(Mat::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(const std::vector<const Mat*>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("adam: gradient count does not match parameters");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Mat& g = *grads[k];
    if (g.rows() != params_[k]->rows() || g.cols() != params_[k]->cols()) {
      throw ShapeError("adam: gradient shape mismatch at parameter " + std::to_string(k));
    }
    m_[k] = b1 * m_[k] + (1.0 - b1) * g;
    v_[k] = b2 * v_[k] + (1.0 - b2) * g.cwiseAbs2();
    if (config_.learning_rate == 0.0) continue;
    params_[k]->array() -=
        config_.learning_rate * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.epsilon);
  }
}

}  // namespace cfm
