#pragma once

// Dense row-major tensors with a dynamically recorded reverse-mode graph.
//
// Every op result that depends on a tensor with requires_grad() keeps its
// operands and a backward rule. backward() linearises that graph into a
// GradTape (topological order), runs it once and releases it.

#include <algorithm>
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

namespace acgan {

using Shape = std::vector<std::size_t>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool consumed = false;  // backward already ran through this node
  bool interior = false;  // produced by a recorded op
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> operands;
  // Reads this node's grad and accumulates into operands that require grad.
  std::function<void(Node&)> backward_rule;

  bool is_leaf() const { return !interior; }

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    auto node = std::make_shared<detail::Node<T>>();
    node->value.assign(shape_numel(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != data.size())
      throw DimensionError("shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_numel(shape)) + " elements, got " +
                           std::to_string(data.size()));
    for (const T& v : data)
      if (!std::isfinite(v)) throw NonFiniteError("non-finite value in tensor data");
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from_data({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t dim(std::size_t i) const { return node().shape.at(i); }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().value.size(); }

  std::span<const T> data() const { return node().value; }
  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node().value[0];
  }

  // In-place writes are reserved for leaves (parameters, optimizer, gradient checks).
  std::span<T> mutable_data() {
    if (!node().is_leaf()) throw GraphError("mutable_data() on a non-leaf tensor");
    return node_->value;
  }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) {
    if (!node().is_leaf()) throw GraphError("requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
  }

  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void clear_grad() {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }

  // New leaf holding a copy of the values and no graph history.
  Tensor detach() const {
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = shape();
    node->value = node_->value;
    return Tensor(std::move(node));
  }

  Tensor clone_leaf(bool requires_grad) const {
    Tensor t = detach();
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool all_finite() const {
    return std::all_of(node().value.begin(), node().value.end(),
                       [](T v) { return std::isfinite(v); });
  }

  const char* op_name() const { return node().op; }
  const NodePtr& handle() const { return node_; }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  const detail::Node<T>& node() const {
    if (!node_) throw GraphError("use of an undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

namespace detail {

// Builds an op result. The graph is recorded only if some operand requires grad.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> operands,
                      std::function<void(Node<T>&)> backward_rule) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool any = std::any_of(operands.begin(), operands.end(),
                               [](const auto& p) { return p->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->interior = true;
    node->operands = std::move(operands);
    node->backward_rule = std::move(backward_rule);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

// Topologically ordered record of the live graph behind one scalar loss.
template <typename T>
class GradTape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  explicit GradTape(const Tensor<T>& loss) : root_(loss.handle()) {
    if (!root_) throw GraphError("backward() on an undefined tensor");
    if (root_->value.size() != 1)
      throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(root_->shape));
    if (root_->consumed)
      throw GraphError("backward() called twice on the same graph; re-run the forward pass");
    if (!root_->requires_grad)
      throw GraphError("loss does not depend on any tensor that requires grad");

    // Iterative post-order DFS over interior nodes; leaves are not taped.
    if (root_->is_leaf()) return;
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(root_, 0);
    seen.insert(root_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->operands.size()) {
        NodePtr child = node->operands[next++];
        if (child->requires_grad && !child->is_leaf() && seen.insert(child.get()).second) {
          if (child->consumed)
            throw GraphError("graph segment already consumed by an earlier backward()");
          stack.emplace_back(std::move(child), 0);
        }
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }
  const std::vector<NodePtr>& nodes() const { return order_; }

  // Runs every recorded backward rule once, in reverse topological order.
  void run() {
    if (ran_) throw GraphError("GradTape::run() called twice");
    ran_ = true;
    if (root_->is_leaf()) {
      root_->grad_buffer()[0] += T(1);
      return;
    }
    root_->grad.assign(1, T(1));
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      auto& node = **it;
      if (!node.grad.empty()) node.backward_rule(node);
      ++visits_;
      node.consumed = true;
      node.backward_rule = nullptr;
      node.operands.clear();
      node.grad.clear();
      node.grad.shrink_to_fit();
    }
  }

  std::size_t visits() const { return visits_; }

 private:
  NodePtr root_;
  std::vector<NodePtr> order_;
  bool ran_ = false;
  std::size_t visits_ = 0;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
template <typename T>
void backward(const Tensor<T>& loss) {
  GradTape<T> tape(loss);
  tape.run();
}

}  // namespace acgan
