#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage. Operations in
// ops.hpp record a backward closure on the calling thread's Tape whenever an
// input participates in gradients and gradients are enabled. backward()
// replays the tape in reverse execution order and then clears it.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace promptrec {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Row vector {1, n}.
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // Rank-1 tensors of extent n read as a 1 x n row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  // Handles are shallow: gradient buffers stay writable through const copies
  // so backward closures can accumulate into captured inputs.
  std::span<double> grad() const { return impl_->grad; }

  double item() const;
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return impl_->data[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  void zero_grad();

  // Independent storage with the same values and flags; gradient is not copied.
  Tensor clone() const;
  // Non-differentiable view of the same values as a fresh leaf.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend class Tape;
};

// Ordered record of executed differentiable operations.
class Tape {
 public:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void()> backward;
  };

  // The tape operations on this thread record onto.
  static Tape& current();

  void record(const Tensor& output, std::vector<Tensor> inputs, std::function<void()> backward);
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  void clear() noexcept { nodes_.clear(); }

  // Order in which the last backward pass visited recorded nodes (indices
  // into the recording order). Kept for inspection in tests.
  const std::vector<std::size_t>& last_visit_order() const noexcept { return visit_order_; }

  void backward(Tensor& loss);

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

// Populates .grad of every requires_grad ancestor of a scalar loss, then
// clears the current tape.
void backward(Tensor& loss);

bool grad_enabled() noexcept;

// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace promptrec
