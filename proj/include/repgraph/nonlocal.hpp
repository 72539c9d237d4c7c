#pragma once

#include <cstdint>
#include <functional>

#include "repgraph/autograd.hpp"
#include "repgraph/layer_config.hpp"
#include "repgraph/params.hpp"

namespace repgraph {

// Dense non-local block: theta/phi/g projections C -> C', softmax affinity
// over all h*w nodes (softmax is the only normaliser), then fusion back to C
// channels. Parameter names: theta.*, phi.*, g.*, out.*.
struct NonLocalConfig {
  std::size_t channels = 0;
  std::size_t inner = 0;
  Fusion fusion = Fusion::sum;
  InitMode init_mode = InitMode::fresh;
  std::uint64_t seed = 0;
};

template <Real T>
struct NonLocalParams {
  NonLocalConfig config;
  ParamSet<T> params;

  static NonLocalParams create(const NonLocalConfig& cfg);
};

// Shared aggregation step of both block families. sum: project_back(x_tilde)
// + x. concat: project_back([x_tilde ; x]), where project_back maps C'+C -> C.
template <Real T>
Var<T> aggregate(Var<T> x_tilde, Var<T> x, Fusion fusion, const std::function<Var<T>(Var<T>)>& project_back);

template <Real T>
Var<T> nonlocal_block(Var<T> x, const BoundParams<T>& p, const NonLocalConfig& cfg);

template <Real T>
Tensor4<T> nonlocal_forward(const Tensor4<T>& x, const NonLocalParams<T>& p);

// Affinity matrix A(X) of one batch element, N x N with N = h*w.
template <Real T>
Matrix<T> nonlocal_affinity(const Tensor4<T>& x, const NonLocalParams<T>& p, std::size_t batch = 0);

}  // namespace repgraph
