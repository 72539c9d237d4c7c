#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "repgraph/autograd.hpp"
#include "repgraph/error.hpp"
#include "repgraph/rng.hpp"

namespace repgraph {

// Ordered, named parameter tensors of one block.
template <Real T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor4<T>>;

  void add(std::string name, Tensor4<T> value) {
    if (index_.count(name)) throw Error(ErrorCode::contract, "duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor4<T>& at(const std::string& name) { return entries_[lookup(name)].second; }
  const Tensor4<T>& at(const std::string& name) const { return entries_[lookup(name)].second; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::index, "unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Parameters placed on a tape as leaves.
template <Real T>
class BoundParams {
 public:
  Var<T> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw Error(ErrorCode::index, "parameter '" + name + "' not bound");
    return it->second;
  }
  std::optional<Var<T>> maybe(const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) return std::nullopt;
    return it->second;
  }
  const std::map<std::string, Var<T>>& all() const { return vars_; }
  void set(const std::string& name, Var<T> v) { vars_[name] = v; }

 private:
  std::map<std::string, Var<T>> vars_;
};

template <Real T>
BoundParams<T> bind(Tape<T>& tape, const ParamSet<T>& params, bool requires_grad = true) {
  BoundParams<T> bound;
  for (const auto& [name, value] : params.entries()) bound.set(name, tape.leaf(value, requires_grad, name));
  return bound;
}

// Adds `name.weight` (c_out, c_in, 1, 1) with fan-in uniform init and a zero
// `name.bias` (1, c_out, 1, 1).
template <Real T>
void add_projection(ParamSet<T>& params, const std::string& name, std::size_t c_out, std::size_t c_in, Rng& rng) {
  params.add(name + ".weight", fan_in_uniform<T>(Shape4{c_out, c_in, 1, 1}, c_in, rng));
  params.add(name + ".bias", Tensor4<T>(1, c_out, 1, 1));
}

template <Real T>
void add_batch_norm(ParamSet<T>& params, const std::string& name, std::size_t channels) {
  params.add(name + ".gamma", Tensor4<T>(1, channels, 1, 1, T{1}));
  params.add(name + ".beta", Tensor4<T>(1, channels, 1, 1, T{0}));
}

}  // namespace repgraph
