#include "promptrec/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "promptrec/errors.hpp"

namespace promptrec {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

static void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  throw DimensionError("expected a matrix, got " + shape_str(s));
}

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw DimensionError("expected a matrix, got " + shape_str(s));
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (flag) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  Tensor t(std::move(impl));
  t.set_requires_grad(impl_->requires_grad);
  return t;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, std::function<void()> backward) {
  Node node;
  node.output = output.impl_;
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) {
    if (in.requires_grad()) node.inputs.push_back(in.impl_);
  }
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
}

void Tape::backward(Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  TensorImpl* root = loss.impl();
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(), [&](const Node& n) { return n.output.get() == root; });
  if (it == nodes_.rend()) throw ContractError("backward(): loss was not produced on the current tape");

  const auto root_index = static_cast<std::size_t>(std::distance(it, nodes_.rend())) - 1;
  root->grad[0] = 1.0;

  std::unordered_set<const TensorImpl*> needed{root};
  visit_order_.clear();
  for (std::size_t i = root_index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!needed.count(node.output.get())) continue;
    visit_order_.push_back(i);
    node.backward();
    for (auto& in : node.inputs) needed.insert(in.get());
  }
  nodes_.clear();
}

void backward(Tensor& loss) { Tape::current().backward(loss); }

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace promptrec
