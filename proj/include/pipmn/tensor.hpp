#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "pipmn/error.hpp"

namespace pipmn {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

inline long shape_numel(const std::vector<int>& shape) {
  long n = 1;
  for (int e : shape) n *= e;
  return n;
}

// Dense row-major tensor of rank <= 3 (rank 0 is a scalar). Copies share
// storage. Values are immutable after construction except through the
// gradient buffer; ops always allocate fresh outputs.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : shape_(std::move(shape)) {
    validate_shape();
    data_ = std::make_shared<std::vector<T>>(shape_numel(shape_), T(0));
    if (requires_grad) ensure_grad();
  }

  Tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false)
      : shape_(std::move(shape)) {
    validate_shape();
    if (static_cast<long>(values.size()) != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(std::move(values));
    if (requires_grad) ensure_grad();
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(data_); }
  int rank() const { return static_cast<int>(shape_.size()); }
  long size() const { return data_ ? static_cast<long>(data_->size()) : 0; }
  const std::vector<int>& shape() const { return shape_; }
  int extent(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  std::vector<T>& values() { return *data_; }
  const std::vector<T>& values() const { return *data_; }

  bool requires_grad() const { return static_cast<bool>(grad_); }
  void ensure_grad() {
    if (!grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
  }
  // The gradient buffer is shared state and stays writable through const
  // handles; backward closures accumulate into captured copies.
  T* grad() const { return grad_->data(); }
  const std::vector<T>& grad_values() const { return *grad_; }

  // Scalar read; throws unless the tensor holds exactly one value.
  T item() const {
    if (size() != 1)
      throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape_));
    return (*data_)[0];
  }

 private:
  void validate_shape() const {
    if (shape_.size() > 3)
      throw ShapeError("rank " + std::to_string(shape_.size()) + " unsupported (max 3)");
    for (int e : shape_)
      if (e < 1) throw ShapeError("non-positive extent in shape " + shape_str(shape_));
  }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;
};

// A named trainable tensor. Construction allocates the gradient buffer so a
// parameter can always be stepped after one backward pass.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name_, Tensor<T> value_, bool trainable_ = true)
      : name(std::move(name_)), value(std::move(value_)), trainable(trainable_) {
    if (trainable) value.ensure_grad();
  }

  bool defined() const { return value.defined(); }
};

// Reverse-mode computation record. Ops append backward closures during the
// forward pass; backward() replays them in reverse, accumulating (+=) into
// the gradient buffer of every tensor that requires grad, exactly once per
// use. A consumed tape must be reset() before it can run backward again.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  void backward(Tensor<T>& loss) {
    if (loss.size() != 1)
      throw ShapeError("backward expects a scalar loss, got " + shape_str(loss.shape()));
    if (done_)
      throw Error("backward already ran on this tape; reset() before reusing it");
    done_ = true;
    loss.ensure_grad();
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void reset() {
    nodes_.clear();
    done_ = false;
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  bool consumed() const { return done_; }

 private:
  std::vector<std::function<void()>> nodes_;
  bool done_ = false;
};

}  // namespace pipmn
