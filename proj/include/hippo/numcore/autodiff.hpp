#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hippo/numcore/tensor.hpp"

namespace hippo::ad {

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

// Reverse-mode tape for the fixed operation vocabulary in ops.hpp. Values are
// immutable once recorded; gradients are materialized lazily during
// backward().
template <typename Real>
class Tape {
 public:
  using TensorT = BasicTensor<Real>;
  // Called with the node's accumulated output gradient. Propagates into the
  // gradients of the node's parents through grad_of().
  using BackwardFn = std::function<void(Tape&, const TensorT&)>;

  Var leaf(TensorT value, bool requires_grad = true) {
    value.check_finite("leaf");
    nodes_.push_back(Node{std::move(value), TensorT(), false, requires_grad, {}});
    return Var{nodes_.size() - 1};
  }

  Var constant(TensorT value) { return leaf(std::move(value), false); }

  // Records an operation output. `parents` decide whether the result needs
  // a gradient; `backward` is dropped when none of them do.
  Var record(TensorT value, std::string_view op, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(std::move(value), op, std::vector<Var>(parents), std::move(backward));
  }

  Var record(TensorT value, std::string_view op, const std::vector<Var>& parents, BackwardFn backward) {
    value.check_finite(op);
    bool needs = false;
    for (Var p : parents) needs = needs || requires_grad(p);
    nodes_.push_back(Node{std::move(value), TensorT(), false, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  const TensorT& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Mutable gradient accumulator for `v`, zero-initialized on first access.
  TensorT& grad_of(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.grad = TensorT::zeros(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  // Gradient after backward(); zeros when nothing flowed into `v`.
  TensorT grad(Var v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : TensorT::zeros(n.value.shape());
  }

  // Seeds d(root)/d(root) = 1 and walks the tape in reverse recording order.
  void backward(Var root) {
    if (value(root).size() != 1) {
      throw ShapeError("backward() needs a scalar root, got " + shape_string(value(root).shape()));
    }
    grad_of(root)[0] += Real(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool has_grad;
    bool requires_grad;
    BackwardFn backward;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw Error("tape: invalid variable handle");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw Error("tape: invalid variable handle");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

}  // namespace hippo::ad
