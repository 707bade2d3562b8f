#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dce/common.hpp"

namespace dce {

// Dense N-d tensor (order <= 4, activations laid out NxCxHxW) with an
// optional same-shape gradient buffer. Copies share the payload, so a tensor
// captured by a backward closure sees gradient updates made through any alias.
template <typename T>
class Tensor {
 public:
  Tensor() : p_(std::make_shared<Payload>()) {}

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.p_->shape = std::move(shape);
    t.p_->values.assign(numel_of(t.p_->shape), T(0));
    return t;
  }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<T> data) {
    Tensor t;
    if (numel_of(shape) != data.size())
      fail(strf("Tensor::from: shape %s holds %zu values, got %zu",
                shape_str(shape).c_str(), numel_of(shape), data.size()));
    t.p_->shape = std::move(shape);
    t.p_->values = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  const std::vector<int>& shape() const { return p_->shape; }
  int ndim() const { return int(p_->shape.size()); }
  int dim(int i) const { return p_->shape[size_t(i)]; }
  size_t numel() const { return p_->values.size(); }

  std::vector<T>& values() const { return p_->values; }
  T* data() const { return p_->values.data(); }

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool b) const { p_->requires_grad = b; }

  bool has_grad() const { return !p_->grad.empty(); }

  // Gradient buffer, zero-allocated on first touch.
  std::vector<T>& grad() const {
    if (p_->grad.size() != p_->values.size()) p_->grad.assign(p_->values.size(), T(0));
    return p_->grad;
  }

  void zero_grad() const {
    if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), T(0));
  }

  T item() const {
    check(numel() == 1, "Tensor::item: tensor is not scalar");
    return p_->values[0];
  }

  // Deep copy; gradient buffer not carried over.
  Tensor clone() const {
    Tensor t;
    t.p_->shape = p_->shape;
    t.p_->values = p_->values;
    t.p_->requires_grad = p_->requires_grad;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(p_->values.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = U(p_->values[i]);
    return Tensor<U>::from(p_->shape, std::move(out));
  }

  bool same_payload(const Tensor& other) const { return p_ == other.p_; }

 private:
  struct Payload {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  static size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      check(d > 0, "Tensor: all extents must be positive, got " + shape_str(shape));
      n *= size_t(d);
    }
    return n;
  }

  std::shared_ptr<Payload> p_;
};

// Tape of executed operations. Ops append one closure per node in execution
// order, so running closures back to front is a reverse topological visit and
// each node is handled exactly once. A tensor consumed by several ops picks
// up one additive adjoint contribution per consumer.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> node) { nodes_.push_back(std::move(node)); }

  size_t node_count() const { return nodes_.size(); }

  void backward(const Tensor<T>& loss) {
    check(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape()));
    check(loss.requires_grad(), "backward: loss is detached from the tape");
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

}  // namespace dce
