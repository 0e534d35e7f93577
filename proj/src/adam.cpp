#include "balm/adam.hpp"

#include <cmath>

namespace balm {

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig config)
    : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.m_.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params for state of " +
                         std::to_string(state.m_.size()));
  }
  state.step_ += 1;
  const AdamConfig& c = state.config_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.step_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (p.numel() != state.m_[i].size()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has " +
                           std::to_string(p.numel()) + " values, state has " +
                           std::to_string(state.m_[i].size()));
    }
    if (!p.has_grad()) continue;
    float* m = state.m_[i].data();
    float* v = state.v_[i].data();
    const float* g = p.grad();
    float* w = p.data();
    const size_t n = p.numel();
    for (size_t j = 0; j < n; ++j) {
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g[j] * g[j];
      const float mhat = static_cast<float>(m[j] / bc1);
      const float vhat = static_cast<float>(v[j] / bc2);
      w[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

float global_grad_norm(const std::vector<Tensor>& params) {
  double total = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    const float* g = p.grad();
    const size_t n = p.numel();
    for (size_t j = 0; j < n; ++j) total += static_cast<double>(g[j]) * g[j];
  }
  return static_cast<float>(std::sqrt(total));
}

void clip_global_norm(std::vector<Tensor>& params, float max_norm) {
  const float norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0f) return;
  const float factor = max_norm / norm;
  for (Tensor& p : params) {
    if (!p.has_grad()) continue;
    float* g = p.grad();
    const size_t n = p.numel();
    for (size_t j = 0; j < n; ++j) g[j] *= factor;
  }
}

}  // namespace balm
