#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "balm/error.hpp"

namespace balm {

namespace detail {
// Values and gradient share one storage node so reshaped views stay coherent:
// a gradient buffer allocated after a view was taken is still visible to it.
struct TensorStorage {
  std::vector<float> values;
  std::vector<float> grad;  // empty until a tape needs it
  bool requires_grad = false;
  // Scalar reductions accumulate in double; the exact value rides along so
  // finite-difference oracles are not limited by the final float32 rounding.
  double scalar_acc = 0.0;
  bool has_scalar_acc = false;
};
}  // namespace detail

// Dense row-major float32 tensor with value semantics over shared storage.
// Copies are cheap aliases; clone() makes an independent deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t numel() const;

  float* data() { return storage_->values.data(); }
  const float* data() const { return storage_->values.data(); }
  float at(size_t i) const { return storage_->values[i]; }
  std::vector<float>& values() { return storage_->values; }
  const std::vector<float>& values() const { return storage_->values; }

  bool requires_grad() const { return storage_ && storage_->requires_grad; }
  void set_requires_grad(bool flag) { storage_->requires_grad = flag; }

  // Allocates (zero-filled) the gradient buffer if absent.
  void ensure_grad();
  bool has_grad() const { return storage_ && !storage_->grad.empty(); }
  float* grad() { return storage_->grad.data(); }
  const float* grad() const { return storage_->grad.data(); }
  std::vector<float>& grad_values() { return storage_->grad; }
  const std::vector<float>& grad_values() const { return storage_->grad; }
  void zero_grad();

  // Scalar value; ContractError when not a single-element tensor.
  float item() const;
  // Scalar value at the precision of the reduction that produced it.
  double item_f64() const;
  void set_scalar_acc(double value);
  bool has_scalar_acc() const { return storage_ && storage_->has_scalar_acc; }

  // New shape over the same storage (and gradient). Element count must match.
  Tensor reshape(std::vector<int> new_shape) const;
  Tensor clone() const;

  bool finite() const;

  // Storage identity, for aliasing checks and parameter maps.
  const void* id() const { return storage_.get(); }

 private:
  std::vector<int> shape_;
  std::shared_ptr<detail::TensorStorage> storage_;
};

std::string shape_str(const std::vector<int>& shape);

// Ordered record of executed operations. Reverse accumulation first zeroes
// every gradient buffer the tape touched, so replaying twice from the same
// tape yields identical gradients.
class GradTape {
 public:
  void record(std::vector<Tensor> touched, std::function<void()> backward_step);
  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(const Tensor& loss);
  size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  std::vector<Tensor> touched_;
};

GradTape* active_tape();

// RAII scope: ops executed inside record onto the given tape.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

}  // namespace balm
