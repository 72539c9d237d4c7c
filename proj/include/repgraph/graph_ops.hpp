#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "repgraph/autograd.hpp"
#include "repgraph/ops.hpp"

// Differentiable wrappers: each op computes its forward value with the plain
// kernels and records the matching backward rule on the tape.
namespace repgraph::ag {

template <Real T>
Var<T> add(Var<T> a, Var<T> b);
template <Real T>
Var<T> mul(Var<T> a, Var<T> b);
template <Real T>
Var<T> scale(Var<T> a, T s);
template <Real T>
Var<T> sum(Var<T> a);
template <Real T>
Var<T> mean(Var<T> a);
template <Real T>
Var<T> relu(Var<T> x);

template <Real T>
Var<T> project(Var<T> x, Var<T> weight, std::optional<Var<T>> bias);

template <Real T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, bool training);

template <Real T>
Var<T> avg_pool_grid(Var<T> x, std::size_t g);
template <Real T>
Var<T> concat_channels(Var<T> a, Var<T> b);

template <Real T>
Var<T> sample_offsets(Var<T> x, Var<T> offsets, std::size_t stride);

template <Real T>
Var<T> dense_attention(Var<T> q, Var<T> k, Var<T> v);

template <Real T>
Var<T> sparse_attention(Var<T> q, Var<T> keys, Var<T> values, std::size_t stride, std::size_t groups,
                        Tensor4<T>* weights_out = nullptr);

// Mean per-pixel cross entropy of softmax over channels; labels are indexed
// b*h*w + y*w + x.
template <Real T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels);

}  // namespace repgraph::ag
