#include "balm/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace balm {

namespace {

size_t checked_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

thread_local GradTape* g_active_tape = nullptr;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  Tensor t;
  size_t n = checked_numel(shape);
  t.shape_ = std::move(shape);
  t.storage_ = std::make_shared<detail::TensorStorage>();
  t.storage_->values.assign(n, value);
  t.storage_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
  size_t n = checked_numel(shape);
  if (n != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.storage_ = std::make_shared<detail::TensorStorage>();
  t.storage_->values = std::move(values);
  t.storage_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

size_t Tensor::numel() const {
  return storage_ ? storage_->values.size() : 0;
}

void Tensor::ensure_grad() {
  if (storage_->grad.size() != storage_->values.size()) {
    storage_->grad.assign(storage_->values.size(), 0.0f);
  }
}

void Tensor::zero_grad() {
  if (storage_ && !storage_->grad.empty()) {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0f);
  }
}

float Tensor::item() const {
  if (!storage_ || storage_->values.size() != 1) {
    throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape_));
  }
  return storage_->values[0];
}

double Tensor::item_f64() const {
  if (!storage_ || storage_->values.size() != 1) {
    throw ContractError("item_f64() requires a scalar tensor, got shape " + shape_str(shape_));
  }
  return storage_->has_scalar_acc ? storage_->scalar_acc
                                  : static_cast<double>(storage_->values[0]);
}

void Tensor::set_scalar_acc(double value) {
  storage_->scalar_acc = value;
  storage_->has_scalar_acc = true;
}

Tensor Tensor::reshape(std::vector<int> new_shape) const {
  if (checked_numel(new_shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.storage_ = storage_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.storage_ = std::make_shared<detail::TensorStorage>();
  t.storage_->values = storage_->values;
  t.storage_->requires_grad = storage_->requires_grad;
  t.storage_->scalar_acc = storage_->scalar_acc;
  t.storage_->has_scalar_acc = storage_->has_scalar_acc;
  return t;
}

bool Tensor::finite() const {
  for (float v : storage_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void GradTape::record(std::vector<Tensor> touched, std::function<void()> backward_step) {
  for (auto& t : touched) touched_.push_back(std::move(t));
  steps_.push_back(std::move(backward_step));
}

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad() || !loss.has_grad()) {
    throw ContractError("backward: loss was not produced under this tape");
  }
  for (auto& t : touched_) t.zero_grad();
  Tensor seed = loss;
  seed.grad()[0] = 1.0f;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

GradTape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace balm
