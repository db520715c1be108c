#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pptr/tensor/tensor.hpp"

namespace pptr::ad {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Nodes are stored in creation order, which is a topological order, so
/// `backward` is a single reverse sweep. A tape built with `record = false`
/// keeps values only (inference). One tape belongs to one thread.
class Tape {
 public:
  /// Receives the gradient flowing into the node and pushes contributions to
  /// its parents via `accumulate`.
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// Leaf that collects a gradient.
  Var parameter(Tensor value) { return push(std::move(value), record_, nullptr); }

  /// Record an op result. `requires_grad` should be true when any parent
  /// requires a gradient; it is ignored on a non-recording tape.
  Var push(Tensor value, bool requires_grad, Backward backward) {
    if (!value.all_finite())
      throw Error(Errc::NonFiniteInput, "non-finite value produced on tape");
    Node node;
    node.value = std::move(value);
    node.requires_grad = record_ && requires_grad;
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient of the last `backward` root w.r.t. v (zeros if unreached).
  const Tensor& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  /// Mutable gradient buffer of v, zero-initialised on first touch.
  Tensor& grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  void accumulate(Var v, const Tensor& g) {
    if (!nodes_[v.id].requires_grad) return;
    Tensor& buf = grad_buffer(v);
    if (!buf.same_shape(g)) throw Error(Errc::LengthMismatch, "gradient shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }

  /// Reverse sweep from a single-element root, seeded with 1.
  void backward(Var root) {
    if (!record_) throw Error(Errc::InvalidConfig, "backward on a non-recording tape");
    if (nodes_[root.id].value.size() != 1)
      throw Error(Errc::InvalidConfig, "backward root must be a scalar");
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buffer(root)[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);  // only touches lower ids; nodes_ never grows here
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }
inline const Tensor& Var::grad() const { return tape->grad(*this); }
inline bool Var::requires_grad() const { return tape->requires_grad(*this); }

}  // namespace pptr::ad
