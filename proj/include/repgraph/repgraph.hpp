#pragma once

#include <map>
#include <string>
#include <utility>

#include "repgraph/autograd.hpp"
#include "repgraph/layer_config.hpp"
#include "repgraph/nonlocal.hpp"
#include "repgraph/ops.hpp"
#include "repgraph/params.hpp"

namespace repgraph {

// Per-position sample displacements, (n, 2S, h, w): channel 2k is dy and
// 2k+1 is dx of sample k, in feature-map cells.
template <Real T>
struct OffsetField {
  Tensor4<T> field;

  std::size_t nodes() const { return field.c() / 2; }
  static OffsetField wrap(Tensor4<T> t);
};

// Sampled features of one branch, (n, S*C, h, w) with channel k*C + c, and
// the absolute sampling positions (n, 2S, h, w) as (y, x) pairs.
template <Real T>
struct RepresentativeSet {
  Tensor4<T> features;
  Tensor4<T> positions;
  std::size_t nodes = 0;
  std::size_t channels = 0;
};

// (n, G, h*w, S): one distribution over the S samples per query and channel group.
template <Real T>
struct AttentionWeights {
  Tensor4<T> weights;

  std::size_t nodes() const { return weights.w(); }
  // max over rows of |sum - 1|, and the smallest entry.
  double max_row_sum_error() const;
  double min_entry() const;
};

template <Real T>
OffsetField<T> regress_offsets(const Tensor4<T>& x, const Projection1x1<T>& w_off);

template <Real T>
RepresentativeSet<T> sample_representative(const Tensor4<T>& x_branch, const OffsetField<T>& offsets,
                                           std::size_t stride = 1);

template <Real T>
std::pair<Tensor4<T>, AttentionWeights<T>> repgraph_attention(const Tensor4<T>& x_theta,
                                                               const RepresentativeSet<T>& keys,
                                                               const RepresentativeSet<T>& values,
                                                               std::size_t stride = 1, std::size_t groups = 1);

template <Real T>
struct ForwardOptions {
  bool training = false;
  // Replaces the regressed offsets (used by the dense-equivalence oracle).
  const Tensor4<T>* offsets_override = nullptr;
  AttentionWeights<T>* weights_out = nullptr;
  OffsetField<T>* offsets_out = nullptr;
};

// Shared forward of every RepGraph instantiation. cfg.grid_size and
// cfg.groups select the Grid / Group variants; 1 and 1 give the base layer.
template <Real T>
Var<T> repgraph_block(Var<T> x, const BoundParams<T>& p, std::map<std::string, BatchNormStats<T>>& bn,
                      const LayerConfig& cfg, const ForwardOptions<T>& opt = {});

// Parameters plus batch-norm running statistics of one layer instance.
//
// simple:     theta/phi/g (C -> C'), offset (2S <- C or C'), out (C <- C' or C'+C)
// bottleneck: reduce (C' <- C) + reduce_bn, optional theta/phi/g (C' -> C'),
//             offset (2S <- C'), expand (C <- C' or C'+C) + expand_bn
template <Real T>
class RepGraphLayer {
 public:
  explicit RepGraphLayer(const LayerConfig& cfg);

  const LayerConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  std::map<std::string, BatchNormStats<T>>& bn_stats() { return bn_; }

  Var<T> forward(Var<T> x, const BoundParams<T>& p, const ForwardOptions<T>& opt = {});
  Tensor4<T> forward(const Tensor4<T>& x, const ForwardOptions<T>& opt = {});

  // Same forward with the grid size / group count replaced.
  Tensor4<T> forward_as(const Tensor4<T>& x, std::size_t grid_size, std::size_t groups,
                        const ForwardOptions<T>& opt = {});

  // Non-local block sharing this layer's theta/phi/g/out weights (simple only).
  NonLocalParams<T> matching_nonlocal() const;

 private:
  LayerConfig cfg_;
  ParamSet<T> params_;
  std::map<std::string, BatchNormStats<T>> bn_;
};

template <Real T>
Tensor4<T> simple_repgraph_forward(const Tensor4<T>& x, RepGraphLayer<T>& layer, const ForwardOptions<T>& opt = {});

template <Real T>
Tensor4<T> bottleneck_repgraph_forward(const Tensor4<T>& x, RepGraphLayer<T>& layer,
                                       const ForwardOptions<T>& opt = {});

}  // namespace repgraph
