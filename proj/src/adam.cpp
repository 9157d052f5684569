#include "cakgcn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cakgcn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape));
    v_.push_back(Tensor::zeros(p->value.shape));
  }
}

void Adam::step() {
  for (Parameter* p : params_)
    if (!p->grad_ready)
      throw std::runtime_error("adam: missing gradient for parameter '" + p->name + "'");
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter& p = *params_[pi];
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
      double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace cakgcn
