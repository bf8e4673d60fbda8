#include "rgc/diffcore/tape.hpp"

#include "rgc/common/error.hpp"

namespace rgc::diffcore {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  require(value.all_finite(), ErrorKind::kInvariant, "non-finite constant recorded on tape");
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  require(value.all_finite(), ErrorKind::kInvariant, "non-finite variable recorded on tape");
  nodes_.push_back(Node{std::move(value), {}, false, true, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  Var v = variable(p.value);
  nodes_.back().param = &p;
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward,
                 std::uint64_t flops) {
  require(value.all_finite(), ErrorKind::kInvariant, "op produced non-finite values");
  bool needs = false;
  for (Var p : parents) {
    require(p.tape_ == this, ErrorKind::kInvariant, "operand recorded on a different tape");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  flops_ += flops;
  nodes_.push_back(Node{std::move(value), {}, false, needs, needs ? std::move(backward) : nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::value(Var v) const {
  require(v.tape_ == this && v.id_ < nodes_.size(), ErrorKind::kInvariant, "stale Var handle");
  return nodes_[v.id_].value;
}

Tensor Tape::grad(Var v) const {
  (void)value(v);
  const Node& node = nodes_[v.id_];
  return node.has_grad ? node.grad : Tensor::zeros_like(node.value);
}

void Tape::backward(Var loss) {
  require(loss.tape_ == this, ErrorKind::kInvariant, "loss recorded on a different tape");
  require(value(loss).numel() == 1, ErrorKind::kDimension,
          "backward needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buffer(loss).fill(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.value, n.grad);
    if (n.param != nullptr) {
      require(n.grad.all_finite(), ErrorKind::kInvariant,
              "non-finite gradient for parameter '" + n.param->name + "'");
      n.param->grad.accumulate(n.grad);
    }
  }
}

}  // namespace rgc::diffcore
