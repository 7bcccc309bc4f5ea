#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ssr::ad {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN/Inf or a gradient goes non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}

inline bool grad_enabled() { return detail::grad_mode_enabled; }

/// Disables graph recording for its lifetime (inference, frozen sub-networks).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) {
    detail::grad_mode_enabled = false;
  }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs' grad buffers.
  std::function<void(const Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
  }
};

/// Handle to a node of the computation graph. Copies share storage, the same
/// way a parameter is shared between every layer call that reads it.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using NodePtr = std::shared_ptr<Node<Real>>;

  Tensor() : node_(std::make_shared<Node<Real>>()) {}

  explicit Tensor(Shape shape, Real fill = Real(0)) : Tensor() {
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    node_->value.assign(numel_of(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<Real> data) : Tensor() {
    if (numel_of(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
  }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor scalar(Real v) { return Tensor(Shape{1}, std::vector<Real>{v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<Real> data() { return node_->value; }
  std::span<const Real> data() const { return node_->value; }
  Real* raw() { return node_->value.data(); }
  const Real* raw() const { return node_->value.data(); }
  Real item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }
  Real operator[](std::size_t i) const { return node_->value[i]; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
  }

  /// New leaf with a copy of the values and no history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  const std::string& op() const { return node_->op; }
  Node<Real>* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

template <typename Real>
void require_finite(std::span<const Real> values, const std::string& op) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NumericError("non-finite value produced by " + op + " at element " +
                         std::to_string(i));
}

/// Builds the output node of an op. History is recorded only when grad mode is
/// on and some input requires a gradient; `make_backward` is invoked lazily so
/// ops skip saving context in inference.
template <typename Real, typename MakeBackward>
Tensor<Real> make_result(Shape shape, std::vector<Real> value, std::string op,
                         std::initializer_list<Tensor<Real>> inputs,
                         MakeBackward&& make_backward) {
  require_finite<Real>(value, op);
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  if (grad_enabled())
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = make_backward();
  }
  return Tensor<Real>(std::move(node));
}

/// Same as above for ops with a runtime-sized input list (concat).
template <typename Real, typename MakeBackward>
Tensor<Real> make_result(Shape shape, std::vector<Real> value, std::string op,
                         const std::vector<Tensor<Real>>& inputs,
                         MakeBackward&& make_backward) {
  require_finite<Real>(value, op);
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  if (grad_enabled())
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = make_backward();
  }
  return Tensor<Real>(std::move(node));
}

/// Post-order (inputs before consumers) over the subgraph that requires grad.
template <typename Real>
std::vector<Node<Real>*> topological_order(const Tensor<Real>& root) {
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  if (!root.requires_grad()) return order;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Real>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate; the
/// interior graph is released afterwards (no retained graph).
template <typename Real>
void backward(const Tensor<Real>& root,
              const std::function<void(const Node<Real>&)>& on_visit = {}) {
  if (root.numel() != 1)
    throw ShapeError("backward() needs a scalar root, got " + to_string(root.shape()));
  if (!root.requires_grad()) return;
  auto order = topological_order(root);
  root.node()->ensure_grad();
  root.node()->grad[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (on_visit) on_visit(*node);
    if (!node->backward) continue;
    node->ensure_grad();
    node->backward(*node);
    for (const auto& in : node->inputs)
      if (in->requires_grad && !in->grad.empty())
        require_finite<Real>(in->grad, "gradient of " + in->op);
  }
  for (Node<Real>* node : order) {
    if (!node->backward) continue;
    node->backward = nullptr;
    node->inputs.clear();
  }
}

}  // namespace ssr::ad
