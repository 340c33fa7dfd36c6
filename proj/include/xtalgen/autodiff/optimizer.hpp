#pragma once

#include <span>
#include <vector>

#include "xtalgen/autodiff/tape.hpp"

namespace xtalgen::ad {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool plain_sgd = false;  // θ ← θ − η ∇θ
};

// Adam (or plain gradient descent) over a fixed parameter list.
class Optimizer {
 public:
  Optimizer(std::vector<Parameter*> params, OptimizerConfig config = {});

  void zero_grad();
  void step();

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  long steps() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  OptimizerConfig config_;
  std::vector<Matrix> m_, v_;
  long steps_ = 0;
};

}  // namespace xtalgen::ad
