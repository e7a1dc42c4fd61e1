#include "hyperadapters/tape.hpp"

#include <stdexcept>

namespace hyperadapters {

Parameter::Parameter(std::string name, Tensor init)
    : name_(std::move(name)),
      value_(std::make_shared<Tensor>(std::move(init))),
      grad_(std::make_shared<Tensor>(value_->shape())) {}

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  return Tensor(value().shape());
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::make_shared<Tensor>(std::move(value));
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.value = std::make_shared<Tensor>(std::move(value));
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParameterPtr& p) {
  Node node;
  node.value = p->value_;
  node.requires_grad = grad_enabled_;
  node.is_param = true;
  if (grad_enabled_) node.grad = p->grad_;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::make_shared<Tensor>(std::move(value));
  if (grad_enabled_) {
    for (auto id : inputs) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (!node.grad) node.grad = std::make_shared<Tensor>(node.value->shape());
  if (node.grad->empty()) *node.grad = Tensor(node.value->shape());
  return *node.grad;
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw std::invalid_argument("backward: variable belongs to another tape");
  if (root.value().size() != 1) {
    throw ShapeError("backward requires a scalar root, got " + shape_string(root.shape()));
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad(root.id())[0] += 1.0;
  backward_visits_ = 0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.backward || !node.grad) continue;
    ++backward_visits_;
    node.backward(*this, i);
  }
}

std::size_t total_size(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p->size();
  return n;
}

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) p->zero_grad();
}

}  // namespace hyperadapters
