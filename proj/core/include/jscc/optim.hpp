#pragma once

#include <vector>

#include "jscc/autodiff.hpp"

namespace jscc::optim {

struct AdamConfig {
  double learning_rate = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamConfig cfg);

  /// One update from the gradients currently stored on the parameters.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace jscc::optim
