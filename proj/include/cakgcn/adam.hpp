#pragma once

#include <cstdint>
#include <vector>

#include "cakgcn/autograd.hpp"

namespace cakgcn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over a fixed parameter set. step() consumes the
// accumulated gradients and clears them.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  std::int64_t steps() const { return step_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig cfg_;
  std::int64_t step_ = 0;
};

}  // namespace cakgcn
