#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "rgc/diffcore/params.hpp"
#include "rgc/diffcore/tensor.hpp"

namespace rgc::diffcore {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in execution order. Execution order is a
/// topological order, so backward() walks the node list in reverse once.
///
/// A tape is single-threaded. Separate tapes share nothing mutable except the
/// Parameters bound with param(); backward() adds into Parameter::grad.
class Tape {
 public:
  /// Called during backward with the node's forward value and its gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf holding a copy of p.value; its gradient is added into p.grad.
  Var param(Parameter& p);

  /// Back-propagates from a scalar loss. Gradients from a previous call are
  /// discarded first.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  /// Gradient of the last loss w.r.t. v; zeros when v is not on a path to it.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t flops() const noexcept { return flops_; }

  // --- op authoring ---------------------------------------------------------

  /// Appends a node. `backward` is dropped when no parent requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward,
             std::uint64_t flops);
  /// Gradient buffer of v, zero-initialised on first access.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::uint64_t flops_ = 0;
};

}  // namespace rgc::diffcore
