#pragma once

#include <vector>

#include "balm/tensor.hpp"

namespace balm {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Per-parameter first/second moment accumulators plus the shared step counter.
class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  void set_lr(float lr) { config_.lr = lr; }
  long step_count() const { return step_; }

 private:
  friend void adam_step(std::vector<Tensor>& params, AdamState& state);
  AdamConfig config_;
  long step_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// Standard Adam update with bias correction. Gradients are read from each
// parameter's gradient buffer; a parameter without one is treated as zero
// gradient and left unchanged.
void adam_step(std::vector<Tensor>& params, AdamState& state);

float global_grad_norm(const std::vector<Tensor>& params);

// Scales all gradients so their global L2 norm is at most max_norm.
void clip_global_norm(std::vector<Tensor>& params, float max_norm);

}  // namespace balm
