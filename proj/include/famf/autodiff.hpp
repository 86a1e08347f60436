#pragma once

// Tape-based reverse-mode differentiation over rank-2 tensors.
//
// A Tape owns every value produced during one forward evaluation. Each
// primitive appends a node holding its output and, when any input needs a
// gradient, a closure that pushes the output gradient back to the inputs.
// Tape::backward walks the nodes in exact reverse order, each once.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "famf/tensor.hpp"

namespace famf {

class Tape;

// Learning-rate group a parameter belongs to.
enum class ParamGroup { kAggregation, kRest };

struct Parameter {
  Tensor value;
  Tensor grad;
  ParamGroup group = ParamGroup::kRest;
  // Non-trainable entries (batchnorm running statistics) are checkpointed but
  // never touched by the optimizer.
  bool trainable = true;
};

// Name-ordered parameter collection. Iteration order is deterministic and
// element addresses are stable across insertions.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value, ParamGroup group = ParamGroup::kRest,
                 bool trainable = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  void zero_grad();
  std::size_t trainable_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Parameter> params_;
};

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  // Gradient accumulated by the last backward pass; empty if none reached it.
  std::span<const double> grad() const;
  Tensor grad_tensor() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to a parameter; backward adds the leaf's gradient into param.grad.
  Var param(Parameter& param);

  // Appends an op output. `inputs` are used only to decide whether the node
  // participates in backward. Throws NumericError on non-finite values.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every node.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  // Mutable gradient buffer of an input, allocated on first use.
  std::span<double> grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

}  // namespace famf
