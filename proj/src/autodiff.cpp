#include "famf/autodiff.hpp"

#include <algorithm>

namespace famf {

Parameter& ParameterStore::add(const std::string& name, Tensor value, ParamGroup group,
                               bool trainable) {
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' is not finite");
  Parameter p;
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  p.group = group;
  p.trainable = trainable;
  auto [it, inserted] = params_.insert_or_assign(name, std::move(p));
  return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }

Tensor Var::grad_tensor() const {
  auto g = grad();
  if (g.empty()) return Tensor(shape());
  return Tensor(shape(), std::vector<double>(g.begin(), g.end()));
}

Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Tape::variable(Tensor value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_[v.id_].requires_grad = true;
  return v;
}

Var Tape::param(Parameter& param) {
  Var v = variable(param.value);
  nodes_[v.id_].param = &param;
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()) +
                       " with shape " + shape_string(value.shape()));
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](const Var& in) {
    return in.tape_ == this && nodes_[in.id_].requires_grad;
  });
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("backward root belongs to another tape");
  if (root.value().size() != 1) {
    throw DimensionError("backward root must be a scalar, got shape " +
                         shape_string(root.value().shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(root.id_)[0] = 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    auto dst = n.param->grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
  }
}

}  // namespace famf
