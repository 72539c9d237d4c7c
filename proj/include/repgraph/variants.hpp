#pragma once

#include "repgraph/repgraph.hpp"

namespace repgraph {

// Grid RepGraph: offsets are regressed once per grid_size x grid_size cell
// from the average-pooled input and applied at the cell's left-top anchor.
// Every position in a cell attends over the cell's shared S samples with its
// own query.
template <Real T>
Tensor4<T> grid_repgraph_forward(const Tensor4<T>& x, RepGraphLayer<T>& layer, GridConfig grid,
                                 const ForwardOptions<T>& opt = {}) {
  if (grid.grid_size == 0) throw Error(ErrorCode::contract, "grid size must be >= 1");
  return layer.forward_as(x, grid.grid_size, layer.config().groups, opt);
}

// Group RepGraph: the query and the sampled key/value sets are split into G
// channel slices with an independent softmax each; the slice outputs are
// concatenated back along channels.
template <Real T>
Tensor4<T> group_repgraph_forward(const Tensor4<T>& x, RepGraphLayer<T>& layer, GroupConfig grp,
                                  const ForwardOptions<T>& opt = {}) {
  const std::size_t cp = layer.config().inner;
  if (grp.groups == 0 || cp % grp.groups != 0) {
    throw Error(ErrorCode::contract, "C'=" + std::to_string(cp) + " is not divisible by G=" + std::to_string(grp.groups));
  }
  return layer.forward_as(x, layer.config().grid_size, grp.groups, opt);
}

}  // namespace repgraph
