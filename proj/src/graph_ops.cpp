#include "repgraph/graph_ops.hpp"

#include <cmath>
#include <memory>

#include "repgraph/attention.hpp"
#include "repgraph/error.hpp"

namespace repgraph::ag {
namespace {

template <Real T>
void require_same(const char* op, Var<T> a, Var<T> b) {
  if (!(a.shape() == b.shape())) {
    throw Error(ErrorCode::dimension, std::string(op) + " of " + a.shape().str() + " and " + b.shape().str());
  }
  if (a.tape != b.tape) throw Error(ErrorCode::contract, std::string(op) + " across tapes");
}

// Forward values are owned by the tape (a deque), so closures keep pointers.
template <Real T>
const Tensor4<T>* saved(Var<T> v) {
  return &v.value();
}

}  // namespace

template <Real T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same("add", a, b);
  Tensor4<T> y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return a.tape->push("add", {a, b}, std::move(y), [](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
    for (auto* slot : in) {
      if (!slot) continue;
      for (std::size_t i = 0; i < g.numel(); ++i) (*slot)[i] += g[i];
    }
  });
}

template <Real T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same("mul", a, b);
  Tensor4<T> y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  const auto* av = saved(a);
  const auto* bp = saved(b);
  return a.tape->push("mul", {a, b}, std::move(y), [av, bp](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (in[0]) (*in[0])[i] += g[i] * (*bp)[i];
      if (in[1]) (*in[1])[i] += g[i] * (*av)[i];
    }
  });
}

template <Real T>
Var<T> scale(Var<T> a, T s) {
  Tensor4<T> y = a.value();
  for (auto& v : y.data()) v *= s;
  return a.tape->push("scale", {a}, std::move(y), [s](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*in[0])[i] += s * g[i];
  });
}

template <Real T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  return a.tape->push("sum", {a}, Tensor4<T>(1, 1, 1, 1, s), [](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
    for (auto& v : in[0]->data()) v += g[0];
  });
}

template <Real T>
Var<T> mean(Var<T> a) {
  const T n = static_cast<T>(a.value().numel());
  if (n == 0) throw Error(ErrorCode::contract, "mean of empty tensor");
  return scale(sum(a), T(1) / n);
}

template <Real T>
Var<T> relu(Var<T> x) {
  const auto* xv = saved(x);
  return x.tape->push("relu", {x}, repgraph::relu(x.value()),
                      [xv](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                        for (std::size_t i = 0; i < g.numel(); ++i) {
                          if ((*xv)[i] > T{0}) (*in[0])[i] += g[i];
                        }
                      });
}

template <Real T>
Var<T> project(Var<T> x, Var<T> weight, std::optional<Var<T>> bias) {
  Tape<T>* tape = x.tape;
  const Tensor4<T>* bias_value = bias ? &bias->value() : nullptr;
  Tensor4<T> y = project_1x1(x.value(), weight.value(), bias_value);
  const auto* xv = saved(x);
  const auto* wv = saved(weight);
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return tape->push("project_1x1", inputs, std::move(y),
                    [xv, wv](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                      project_1x1_backward(*xv, *wv, g, in[0], in[1], in.size() > 2 ? in[2] : nullptr);
                    });
}

template <Real T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, bool training) {
  Tape<T>* tape = x.tape;
  auto cache = std::make_shared<BatchNormCache<T>>();
  Tensor4<T> y = batch_norm_forward(x.value(), gamma.value(), beta.value(), stats, training,
                                    tape->needs_grad({x, gamma, beta}) ? cache.get() : nullptr);
  const auto* gv = saved(gamma);
  return tape->push("batch_norm", {x, gamma, beta}, std::move(y),
                    [cache, gv](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                      batch_norm_backward(g, *gv, *cache, in[0], in[1], in[2]);
                    });
}

template <Real T>
Var<T> avg_pool_grid(Var<T> x, std::size_t g) {
  const Shape4 xs = x.shape();
  return x.tape->push("avg_pool_grid", {x}, repgraph::avg_pool_grid(x.value(), g),
                      [xs, g](const Tensor4<T>& grad, std::span<Tensor4<T>* const> in) {
                        if (g == 1) {
                          for (std::size_t i = 0; i < grad.numel(); ++i) (*in[0])[i] += grad[i];
                        } else {
                          avg_pool_grid_backward(xs, g, grad, *in[0]);
                        }
                      });
}

template <Real T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const std::size_t ca = a.shape().c;
  return a.tape->push("concat_channels", {a, b}, repgraph::concat_channels(a.value(), b.value()),
                      [ca](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                        const std::size_t hw = g.shape().spatial();
                        const std::size_t cb = g.c() - ca;
                        for (std::size_t n = 0; n < g.n(); ++n) {
                          const T* src = g.batch(n);
                          if (in[0]) {
                            T* d = in[0]->batch(n);
                            for (std::size_t i = 0; i < ca * hw; ++i) d[i] += src[i];
                          }
                          if (in[1]) {
                            T* d = in[1]->batch(n);
                            for (std::size_t i = 0; i < cb * hw; ++i) d[i] += src[ca * hw + i];
                          }
                        }
                      });
}

template <Real T>
Var<T> sample_offsets(Var<T> x, Var<T> offsets, std::size_t stride) {
  const auto* xv = saved(x);
  const auto* ov = saved(offsets);
  return x.tape->push("sample_offsets", {x, offsets}, repgraph::sample_offsets(x.value(), offsets.value(), stride),
                      [xv, ov, stride](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                        sample_offsets_backward(*xv, *ov, stride, g, in[0], in[1]);
                      });
}

template <Real T>
Var<T> dense_attention(Var<T> q, Var<T> k, Var<T> v) {
  Tape<T>* tape = q.tape;
  const bool keep = tape->needs_grad({q, k, v});
  auto affinity_t = std::make_shared<Tensor4<T>>();
  Tensor4<T> y = repgraph::dense_attention(q.value(), k.value(), v.value(), keep ? affinity_t.get() : nullptr);
  const auto* qv = saved(q);
  const auto* kv = saved(k);
  const auto* vv = saved(v);
  return tape->push("dense_attention", {q, k, v}, std::move(y),
                    [qv, kv, vv, affinity_t](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                      dense_attention_backward(*qv, *kv, *vv, *affinity_t, g, in[0], in[1], in[2]);
                    });
}

template <Real T>
Var<T> sparse_attention(Var<T> q, Var<T> keys, Var<T> values, std::size_t stride, std::size_t groups,
                        Tensor4<T>* weights_out) {
  Tape<T>* tape = q.tape;
  auto weights = std::make_shared<Tensor4<T>>();
  Tensor4<T> y = repgraph::sparse_attention(q.value(), keys.value(), values.value(), stride, groups, weights.get());
  if (weights_out) *weights_out = *weights;
  const auto* qv = saved(q);
  const auto* kv = saved(keys);
  const auto* vv = saved(values);
  return tape->push("sparse_attention", {q, keys, values}, std::move(y),
                    [qv, kv, vv, weights, stride, groups](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
                      sparse_attention_backward(*qv, *kv, *vv, stride, groups, *weights, g, in[0], in[1], in[2]);
                    });
}

template <Real T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels) {
  const auto& z = logits.value();
  const std::size_t K = z.c();
  const std::size_t hw = z.shape().spatial();
  const std::size_t count = z.n() * hw;
  if (labels.size() != count) {
    throw Error(ErrorCode::dimension, "expected " + std::to_string(count) + " labels, got " + std::to_string(labels.size()));
  }
  auto probs = std::make_shared<Tensor4<T>>(z.shape());
  T loss = 0;
  std::vector<T> col(K);
  for (std::size_t b = 0; b < z.n(); ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t k = 0; k < K; ++k) col[k] = z.plane(b, k)[p];
      softmax_inplace(col.data(), K);
      const int label = labels[b * hw + p];
      if (label < 0 || static_cast<std::size_t>(label) >= K) {
        throw Error(ErrorCode::index, "label " + std::to_string(label) + " outside [0, " + std::to_string(K) + ")");
      }
      for (std::size_t k = 0; k < K; ++k) probs->plane(b, k)[p] = col[k];
      loss -= std::log(std::max(col[label], std::numeric_limits<T>::min()));
    }
  }
  loss /= static_cast<T>(count);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return logits.tape->push(
      "softmax_cross_entropy", {logits}, Tensor4<T>(1, 1, 1, 1, loss),
      [probs, labels_copy, count](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
        const T s = g[0] / static_cast<T>(count);
        const auto& pr = *probs;
        const std::size_t hw = pr.shape().spatial();
        for (std::size_t b = 0; b < pr.n(); ++b) {
          for (std::size_t k = 0; k < pr.c(); ++k) {
            const T* pp = pr.plane(b, k);
            T* d = in[0]->plane(b, k);
            for (std::size_t p = 0; p < hw; ++p) {
              const T target = (*labels_copy)[b * hw + p] == static_cast<int>(k) ? T{1} : T{0};
              d[p] += s * (pp[p] - target);
            }
          }
        }
      });
}

#define REPGRAPH_INSTANTIATE_AG(T)                                                                           \
  template Var<T> add<T>(Var<T>, Var<T>);                                                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                                    \
  template Var<T> scale<T>(Var<T>, T);                                                                       \
  template Var<T> sum<T>(Var<T>);                                                                            \
  template Var<T> mean<T>(Var<T>);                                                                           \
  template Var<T> relu<T>(Var<T>);                                                                           \
  template Var<T> project<T>(Var<T>, Var<T>, std::optional<Var<T>>);                                         \
  template Var<T> batch_norm<T>(Var<T>, Var<T>, Var<T>, BatchNormStats<T>&, bool);                           \
  template Var<T> avg_pool_grid<T>(Var<T>, std::size_t);                                                     \
  template Var<T> concat_channels<T>(Var<T>, Var<T>);                                                        \
  template Var<T> sample_offsets<T>(Var<T>, Var<T>, std::size_t);                                            \
  template Var<T> dense_attention<T>(Var<T>, Var<T>, Var<T>);                                                \
  template Var<T> sparse_attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t, Tensor4<T>*);        \
  template Var<T> softmax_cross_entropy<T>(Var<T>, const std::vector<int>&);

REPGRAPH_INSTANTIATE_AG(float)
REPGRAPH_INSTANTIATE_AG(double)

}  // namespace repgraph::ag
