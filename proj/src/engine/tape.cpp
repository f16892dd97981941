// SPDX-License-Identifier: Apache-2.0
#include "sagmm/autodiff.hpp"
#include "sagmm/errors.hpp"

namespace sagmm::ad {

Parameter::Parameter(std::string name, Matrix value)
    : name_(std::move(name)), value_(std::move(value)) {}

void Parameter::accumulate_grad(const Matrix& g) {
  if (!g.same_shape(value_))
    throw InputError("gradient shape " + g.shape_string() + " does not match parameter " +
                     name_ + " " + value_.shape_string());
  if (grad_.empty()) {
    grad_ = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad_.values()[i] += g.values()[i];
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw InputError("item() on non-scalar " + v.shape_string());
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value(), {}, true, {}, &p});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw InputError("operands recorded on different tapes");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw InputError("loss recorded on a different tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw InputError("backward() needs a 1x1 loss, got " + lv.shape_string());
  grad_buffer(loss.id())(0, 0) += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->accumulate_grad(n.grad);
  }
}

}  // namespace sagmm::ad
