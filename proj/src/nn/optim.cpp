#include <cmath>
#include <stdexcept>

#include "graphgrade/nn.hpp"

namespace graphgrade::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr >= 0.0)) throw std::invalid_argument("Adam: learning rate must be non-negative");
  for (Parameter* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.grad.size() != p.value.size()) continue;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

void sgd_step(const std::vector<Parameter*>& params, double lr) {
  for (Parameter* p : params) {
    if (p->grad.size() == p->value.size()) p->value -= lr * p->grad;
  }
}

}  // namespace graphgrade::nn
