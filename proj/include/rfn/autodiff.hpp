#pragma once

// Tape-based reverse-mode differentiation.
//
// Nodes are appended in evaluation order, so tape order is a topological
// order and the backward sweep is a single reverse scan that visits every
// reachable node exactly once.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rfn/errors.hpp"
#include "rfn/tensor.hpp"

namespace rfn {

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

template <typename T>
class Tape {
 public:
  // Receives the (complete) gradient of the node's output and accumulates
  // into the gradients of its inputs through Tape::grad_buffer.
  using Backward = std::function<void(Tape&, const Tensor<T>&)>;

  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    std::vector<std::size_t> inputs;
    const char* op = "leaf";
    std::string name;
    Backward backward;
    bool requires_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Appends the result of a primitive. The backward closure is dropped when no
  // input needs a gradient. Non-finite results are rejected here.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, const char* op,
                Backward backward) {
    return record(std::move(value), std::vector<Var<T>>(inputs), op, std::move(backward));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, const char* op,
                Backward backward) {
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (const auto& v : inputs) {
      if (v.tape != this) throw InvalidArgument(std::string(op) + ": operand from another tape");
      n.inputs.push_back(v.id);
      n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_.at(id).grad.has_value(); }

  const Tensor<T>& grad(std::size_t id) const {
    const auto& n = nodes_.at(id);
    if (!n.grad) throw InvalidArgument("gradient not populated for node " + std::to_string(id));
    return *n.grad;
  }
  const Tensor<T>& grad(Var<T> v) const { return grad(v.id); }
  bool has_grad(Var<T> v) const { return has_grad(v.id); }

  // Zero-initialized on first touch.
  Tensor<T>& grad_buffer(std::size_t id) {
    auto& n = nodes_.at(id);
    if (!n.grad) n.grad.emplace(n.value.shape());
    return *n.grad;
  }

  void accumulate(std::size_t id, std::span<const T> g) {
    if (!requires_grad(id)) return;
    auto& buf = grad_buffer(id);
    auto dst = buf.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Var<T> root) {
    if (root.value().size() != 1) {
      throw ShapeError("backward() requires a scalar root, got " + root.shape().str());
    }
    for (auto& n : nodes_) n.grad.reset();
    grad_buffer(root.id)[0] = T{1};
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.grad || !n.backward) continue;
      n.backward(*this, *n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::deque<Node> nodes_;
};

}  // namespace rfn
