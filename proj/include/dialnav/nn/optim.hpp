#pragma once

#include <vector>

#include "dialnav/nn/parameters.hpp"

namespace dialnav::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

// Adam over every parameter of one or more stores, clipped by their joint
// norm. step() clips, updates and zeroes grads.
class Adam {
 public:
  Adam(ParameterStore& params, AdamConfig cfg);
  Adam(std::vector<ParameterStore*> stores, AdamConfig cfg);

  void step();
  double last_grad_norm() const noexcept { return last_norm_; }
  int steps_taken() const noexcept { return t_; }

 private:
  std::vector<ParameterStore*> stores_;
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  int t_ = 0;
  double last_norm_ = 0.0;
};

}  // namespace dialnav::nn
