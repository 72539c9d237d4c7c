#include "repgraph/autograd.hpp"

#include "repgraph/error.hpp"

namespace repgraph {

template <Real T>
const Tensor4<T>& Gradients<T>::at(std::size_t id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw Error(ErrorCode::index, "no gradient for tape id " + std::to_string(id));
  }
  return it->second;
}

template <Real T>
Var<T> Tape<T>::leaf(Tensor4<T> value, bool requires_grad, std::string name) {
  TapeNode<T> node;
  node.op = std::move(name);
  node.value = std::move(value);
  node.requires_grad = requires_grad && record_;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <Real T>
bool Tape<T>::needs_grad(std::initializer_list<Var<T>> inputs) const {
  if (!record_) return false;
  for (const auto& v : inputs) {
    if (nodes_.at(v.id).requires_grad) return true;
  }
  return false;
}

template <Real T>
bool Tape<T>::needs_grad(const std::vector<Var<T>>& inputs) const {
  if (!record_) return false;
  for (const auto& v : inputs) {
    if (nodes_.at(v.id).requires_grad) return true;
  }
  return false;
}

template <Real T>
Var<T> Tape<T>::push(std::string op, std::initializer_list<Var<T>> inputs, Tensor4<T> value, BackwardFn<T> backward) {
  return push(std::move(op), std::vector<Var<T>>(inputs), std::move(value), std::move(backward));
}

template <Real T>
Var<T> Tape<T>::push(std::string op, const std::vector<Var<T>>& inputs, Tensor4<T> value, BackwardFn<T> backward) {
  TapeNode<T> node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const auto& v : inputs) {
    if (v.tape != this) throw Error(ErrorCode::contract, "input of '" + node.op + "' belongs to another tape");
    if (v.id >= nodes_.size()) throw Error(ErrorCode::index, "input id past end of tape");
  }
  node.requires_grad = needs_grad(inputs);
  if (node.requires_grad) {
    node.backward = std::move(backward);
    node.inputs.reserve(inputs.size());
    for (const auto& v : inputs) node.inputs.push_back(v.id);
  }
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <Real T>
Gradients<T> Tape<T>::backward(Var<T> loss) const {
  if (!record_) throw Error(ErrorCode::contract, "backward on a tape that does not record");
  if (loss.tape != this) throw Error(ErrorCode::contract, "loss belongs to another tape");
  const auto& loss_node = nodes_.at(loss.id);
  if (loss_node.value.numel() != 1) {
    throw Error(ErrorCode::contract, "loss must be scalar, got shape " + loss_node.value.shape().str());
  }

  std::vector<std::optional<Tensor4<T>>> grads(loss.id + 1);
  grads[loss.id] = Tensor4<T>(loss_node.value.shape(), T{1});

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const auto& node = nodes_[id];
    if (node.leaf || !grads[id] || !node.requires_grad) continue;
    if (!node.backward) {
      throw Error(ErrorCode::unsupported_op, "no backward rule for op '" + node.op + "'");
    }
    std::vector<Tensor4<T>*> slots(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor4<T>(nodes_[in].value.shape());
      slots[k] = &*grads[in];
    }
    node.backward(*grads[id], slots);
    grads[id].reset();
  }

  Gradients<T> out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const auto& node = nodes_[id];
    if (!node.leaf || !node.requires_grad) continue;
    if (id < grads.size() && grads[id]) {
      out.grads_.emplace(id, std::move(*grads[id]));
    } else {
      out.grads_.emplace(id, Tensor4<T>(node.value.shape()));
    }
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace repgraph
