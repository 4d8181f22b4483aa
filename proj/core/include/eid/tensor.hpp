#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eid/common.hpp"

namespace eid {

/// Dimensions of a rank-4 tensor stored as [batch, channel, row, column],
/// row-major, innermost dimension contiguous.
struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t numel() const { return n * c * h * w; }
  int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return detail::cat(n, "x", c, "x", h, "x", w);
  }
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  std::span<T> grad_buf() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

/// Value-semantic handle to shared tensor storage. Copying a Tensor copies
/// the handle, not the data; detach() or clone-style factories copy data.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false) {
    return full(s, T(0), requires_grad);
  }
  static Tensor ones(Shape s, bool requires_grad = false) {
    return full(s, T(1), requires_grad);
  }
  static Tensor full(Shape s, T value, bool requires_grad = false) {
    check(s.n > 0 && s.c > 0 && s.h > 0 && s.w > 0,
          detail::cat("tensor shape must be positive, got ", s.str()));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = s;
    t.impl_->values.assign(static_cast<size_t>(s.numel()), value);
    t.impl_->requires_grad = requires_grad;
    return t;
  }
  static Tensor from_vector(Shape s, std::vector<T> data,
                            bool requires_grad = false) {
    check(static_cast<int64_t>(data.size()) == s.numel(),
          detail::cat("data length ", data.size(), " does not match shape ",
                      s.str()));
    Tensor t = zeros(s, requires_grad);
    t.impl_->values = std::move(data);
    return t;
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return full(Shape{1, 1, 1, 1}, value, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t numel() const { return impl_->shape.numel(); }

  std::span<const T> values() const { return impl_->values; }
  std::span<T> values() { return impl_->values; }

  T at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    const Shape& s = impl_->shape;
    return impl_->values[((n * s.c + c) * s.h + y) * s.w + x];
  }
  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    const Shape& s = impl_->shape;
    return impl_->values[((n * s.c + c) * s.h + y) * s.w + x];
  }

  /// Value of a 1-element tensor.
  T item() const {
    check(numel() == 1, detail::cat("item() on non-scalar tensor of shape ",
                                    shape().str()));
    return impl_->values[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated as zeros on first use.
  std::span<T> grad_buf() { return impl_->grad_buf(); }
  void zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }
  void clear_grad() { impl_->grad.clear(); }

  /// Copy of the values with no gradient history.
  Tensor detach() const {
    Tensor t = zeros(shape());
    t.impl_->values = impl_->values;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t = Tensor<U>::zeros(shape());
    auto dst = t.values();
    for (size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<U>(impl_->values[i]);
    return t;
  }

  std::shared_ptr<TensorImpl<T>>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Reverse-mode tape, one per thread per precision. Ops executed while
/// recording push a backward closure; records are in topological order by
/// construction, so backward() replays them back-to-front exactly once and
/// then clears the tape. A fresh graph is recorded on every forward pass.
template <typename T>
class Tape {
 public:
  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  bool recording() const { return suspend_ == 0; }
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void replay_reverse_and_clear() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

  void suspend() { ++suspend_; }
  void resume() { --suspend_; }

 private:
  std::vector<std::function<void()>> nodes_;
  int suspend_ = 0;
};

/// Suspends gradient recording for both precisions while alive.
class NoGradGuard {
 public:
  NoGradGuard() {
    Tape<float>::current().suspend();
    Tape<double>::current().suspend();
  }
  ~NoGradGuard() {
    Tape<float>::current().resume();
    Tape<double>::current().resume();
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from
/// `loss`, then clears the tape. Gradients add onto whatever is already in
/// the buffers; callers zero or clear them between independent backwards.
template <typename T>
void backward(const Tensor<T>& loss) {
  check(loss.numel() == 1, detail::cat("backward() needs a scalar loss, got ",
                                       loss.shape().str()));
  if (loss.requires_grad()) {
    auto g = loss.impl()->grad_buf();
    g[0] += T(1);
  }
  Tape<T>::current().replay_reverse_and_clear();
}

namespace detail {

/// True when an op should record a backward rule for these inputs.
template <typename T>
inline bool grad_needed(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::current().recording()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace detail

}  // namespace eid
