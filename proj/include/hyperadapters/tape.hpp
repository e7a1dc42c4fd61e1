#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hyperadapters/tensor.hpp"

namespace hyperadapters {

/// A trainable tensor that outlives any single tape. The gradient buffer is
/// shared with the tape leaf that references it, so backward accumulates into
/// it directly.
class Parameter {
 public:
  Parameter(std::string name, Tensor init);

  const std::string& name() const { return name_; }
  Tensor& value() { return *value_; }
  const Tensor& value() const { return *value_; }
  Tensor& grad() { return *grad_; }
  const Tensor& grad() const { return *grad_; }
  std::size_t size() const { return value_->size(); }
  void zero_grad() { grad_->fill(0.0); }

 private:
  friend class Tape;
  std::string name_;
  std::shared_ptr<Tensor> value_;
  std::shared_ptr<Tensor> grad_;
};

using ParameterPtr = std::shared_ptr<Parameter>;
using ParameterList = std::vector<ParameterPtr>;

class Tape;

/// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after backward(); an all-zero tensor when nothing flowed here.
  Tensor grad() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run computation tape. Nodes are appended in evaluation order, so
/// node ids are a topological order and backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf owned by the tape that still receives a gradient.
  Var leaf(Tensor value);
  Var param(const ParameterPtr& p);

  /// Records a primitive application. `backward` is dropped when no input
  /// requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node once.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }

  const Tensor& value(std::size_t id) const { return *nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad && !nodes_[id].grad->empty(); }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    std::shared_ptr<Tensor> value;
    std::shared_ptr<Tensor> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_param = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

std::size_t total_size(const ParameterList& params);
void zero_grads(const ParameterList& params);

}  // namespace hyperadapters
