#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repgraph/tensor.hpp"

namespace repgraph {

template <Real T>
class Tape;

// Handle to a value recorded on a tape.
template <Real T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor4<T>& value() const;
  const Shape4& shape() const { return value().shape(); }
  bool requires_grad() const;
};

// Receives the gradient of the node output and accumulates (+=) into the
// gradients of its inputs. grad_in[i] is null when input i needs no gradient.
template <Real T>
using BackwardFn = std::function<void(const Tensor4<T>& grad_out, std::span<Tensor4<T>* const> grad_in)>;

template <Real T>
struct TapeNode {
  std::string op;
  std::vector<std::size_t> inputs;
  Tensor4<T> value;
  BackwardFn<T> backward;  // saved forward values live in the closure
  bool requires_grad = false;
  bool leaf = false;
};

// Leaf gradients keyed by tape id.
template <Real T>
class Gradients {
 public:
  const Tensor4<T>& operator[](Var<T> v) const { return at(v.id); }
  const Tensor4<T>& at(std::size_t id) const;
  bool contains(std::size_t id) const { return grads_.count(id) != 0; }
  const std::map<std::size_t, Tensor4<T>>& all() const { return grads_; }

 private:
  friend class Tape<T>;
  std::map<std::size_t, Tensor4<T>> grads_;
};

// Dynamic reverse-mode tape. With record=false only forward values are kept,
// which is the inference/benchmark mode.
template <Real T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }
  const TapeNode<T>& node(std::size_t id) const { return nodes_.at(id); }

  Var<T> leaf(Tensor4<T> value, bool requires_grad, std::string name = "leaf");
  Var<T> constant(Tensor4<T> value) { return leaf(std::move(value), false, "constant"); }

  // Records an op. An empty backward marks the op as non-differentiable;
  // reaching it during backward() with a live gradient is an error.
  Var<T> push(std::string op, std::initializer_list<Var<T>> inputs, Tensor4<T> value, BackwardFn<T> backward);
  Var<T> push(std::string op, const std::vector<Var<T>>& inputs, Tensor4<T> value, BackwardFn<T> backward);

  // True when the op being recorded needs its backward closure.
  bool needs_grad(std::initializer_list<Var<T>> inputs) const;
  bool needs_grad(const std::vector<Var<T>>& inputs) const;

  Gradients<T> backward(Var<T> loss) const;

 private:
  bool record_;
  std::deque<TapeNode<T>> nodes_;  // deque keeps value references stable
};

template <Real T>
const Tensor4<T>& Var<T>::value() const {
  return tape->node(id).value;
}

template <Real T>
bool Var<T>::requires_grad() const {
  return tape->node(id).requires_grad;
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace repgraph
