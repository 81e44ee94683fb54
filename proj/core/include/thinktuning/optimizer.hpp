#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thinktuning/policy.hpp"
#include "thinktuning/tensor.hpp"

namespace thinktuning {

struct OptimConfig {
  std::string kind = "adam";
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over the policy's tensor list. The moment buffers are
// exposed so a run can be continued from an exact optimizer state.
class Adam {
 public:
  Adam(const OptimConfig& cfg, const PolicyParams& params);

  // One update; grads must align with params.tensors() order and shapes.
  void update(PolicyParams& params, const std::vector<Tensor>& grads);

  struct State {
    std::vector<Tensor> m, v;
    std::int64_t t = 0;
  };
  const State& state() const { return state_; }
  void set_state(State s);

 private:
  OptimConfig cfg_;
  State state_;
};

}  // namespace thinktuning
