#include "repgraph/repgraph.hpp"

#include <algorithm>
#include <cmath>

#include "repgraph/attention.hpp"
#include "repgraph/error.hpp"
#include "repgraph/graph_ops.hpp"

namespace repgraph {

template <Real T>
OffsetField<T> OffsetField<T>::wrap(Tensor4<T> t) {
  if (t.c() == 0 || t.c() % 2 != 0) {
    throw Error(ErrorCode::dimension, "offset field needs 2S channels, got " + t.shape().str());
  }
  return OffsetField<T>{std::move(t)};
}

template <Real T>
double AttentionWeights<T>::max_row_sum_error() const {
  const std::size_t S = weights.w();
  const std::size_t rows = weights.numel() / std::max<std::size_t>(S, 1);
  double worst = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < S; ++k) s += static_cast<double>(weights[r * S + k]);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

template <Real T>
double AttentionWeights<T>::min_entry() const {
  double m = 1.0;
  for (T v : weights.data()) m = std::min(m, static_cast<double>(v));
  return m;
}

template <Real T>
OffsetField<T> regress_offsets(const Tensor4<T>& x, const Projection1x1<T>& w_off) {
  if (w_off.c_out() == 0 || w_off.c_out() % 2 != 0) {
    throw Error(ErrorCode::dimension, "offset regressor must output 2S channels, has " + std::to_string(w_off.c_out()));
  }
  return OffsetField<T>::wrap(project_1x1(x, w_off));
}

template <Real T>
RepresentativeSet<T> sample_representative(const Tensor4<T>& x_branch, const OffsetField<T>& offsets,
                                           std::size_t stride) {
  RepresentativeSet<T> set;
  set.features = sample_offsets(x_branch, offsets.field, stride);
  set.nodes = offsets.nodes();
  set.channels = x_branch.c();
  const auto& f = offsets.field;
  set.positions = Tensor4<T>(f.shape());
  for (std::size_t b = 0; b < f.n(); ++b) {
    for (std::size_t k = 0; k < set.nodes; ++k) {
      for (std::size_t i = 0; i < f.h(); ++i) {
        for (std::size_t j = 0; j < f.w(); ++j) {
          set.positions(b, 2 * k, i, j) = static_cast<T>(i * stride) + f(b, 2 * k, i, j);
          set.positions(b, 2 * k + 1, i, j) = static_cast<T>(j * stride) + f(b, 2 * k + 1, i, j);
        }
      }
    }
  }
  return set;
}

template <Real T>
std::pair<Tensor4<T>, AttentionWeights<T>> repgraph_attention(const Tensor4<T>& x_theta,
                                                               const RepresentativeSet<T>& keys,
                                                               const RepresentativeSet<T>& values,
                                                               std::size_t stride, std::size_t groups) {
  if (keys.nodes != values.nodes) {
    throw Error(ErrorCode::dimension, "key set has S=" + std::to_string(keys.nodes) + ", value set S=" +
                                          std::to_string(values.nodes));
  }
  AttentionWeights<T> w;
  Tensor4<T> out = sparse_attention(x_theta, keys.features, values.features, stride, groups, &w.weights);
  return {std::move(out), std::move(w)};
}

template <Real T>
Var<T> repgraph_block(Var<T> x, const BoundParams<T>& p, std::map<std::string, BatchNormStats<T>>& bn,
                      const LayerConfig& cfg, const ForwardOptions<T>& opt) {
  cfg.validate();
  if (x.shape().c != cfg.channels) {
    throw Error(ErrorCode::dimension,
                "RepGraph layer expects C=" + std::to_string(cfg.channels) + ", input is " + x.shape().str());
  }
  Tape<T>& tape = *x.tape;
  const std::size_t gs = cfg.grid_size;
  const bool bottleneck = cfg.variant == Variant::bottleneck;

  Var<T> base = x;
  if (bottleneck) {
    const Var<T> reduced = ag::project(x, p["reduce.weight"], p.maybe("reduce.bias"));
    base = ag::relu(ag::batch_norm(reduced, p["reduce_bn.gamma"], p["reduce_bn.beta"], bn.at("reduce_bn"), opt.training));
  }

  Var<T> q = base;
  Var<T> k = base;
  Var<T> v = base;
  if (!bottleneck || cfg.bottleneck_projections) {
    q = ag::project(base, p["theta.weight"], p.maybe("theta.bias"));
    k = ag::project(base, p["phi.weight"], p.maybe("phi.bias"));
    v = ag::project(base, p["g.weight"], p.maybe("g.bias"));
  }

  Var<T> offsets;
  if (opt.offsets_override) {
    const auto& o = *opt.offsets_override;
    const Shape4 want{x.shape().n, 2 * cfg.nodes, (x.shape().h + gs - 1) / gs, (x.shape().w + gs - 1) / gs};
    if (!(o.shape() == want)) {
      throw Error(ErrorCode::dimension, "offset override " + o.shape().str() + ", expected " + want.str());
    }
    offsets = tape.constant(o);
  } else {
    const Var<T> src = cfg.offset_source == OffsetSource::input ? base : q;
    const Var<T> pooled = gs > 1 ? ag::avg_pool_grid(src, gs) : src;
    offsets = ag::project(pooled, p["offset.weight"], p.maybe("offset.bias"));
  }
  if (opt.offsets_out) *opt.offsets_out = OffsetField<T>::wrap(offsets.value());

  // One sampled node set per branch; key and value share the offset field.
  const Var<T> key_set = ag::sample_offsets(k, offsets, gs);
  const Var<T> value_set = v.id == k.id ? key_set : ag::sample_offsets(v, offsets, gs);
  const Var<T> x_tilde = ag::sparse_attention(q, key_set, value_set, gs, cfg.groups,
                                              opt.weights_out ? &opt.weights_out->weights : nullptr);

  Var<T> y;
  if (bottleneck) {
    y = aggregate<T>(x_tilde, x, cfg.fusion, [&](Var<T> t) {
      const Var<T> expanded = ag::project(t, p["expand.weight"], p.maybe("expand.bias"));
      return ag::batch_norm(expanded, p["expand_bn.gamma"], p["expand_bn.beta"], bn.at("expand_bn"), opt.training);
    });
    if (cfg.init_mode == InitMode::fresh) y = ag::relu(y);
  } else {
    y = aggregate<T>(x_tilde, x, cfg.fusion,
                     [&](Var<T> t) { return ag::project(t, p["out.weight"], p.maybe("out.bias")); });
  }
  return y;
}

template <Real T>
RepGraphLayer<T>::RepGraphLayer(const LayerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const std::size_t C = cfg_.channels;
  const std::size_t Cp = cfg_.inner;
  const std::size_t two_s = 2 * cfg_.nodes;
  const std::size_t back_in = cfg_.fusion == Fusion::sum ? Cp : Cp + C;
  const bool pretrained = cfg_.init_mode == InitMode::pretrained_insert;

  if (cfg_.variant == Variant::simple) {
    add_projection(params_, "theta", Cp, C, rng);
    add_projection(params_, "phi", Cp, C, rng);
    add_projection(params_, "g", Cp, C, rng);
    add_projection(params_, "offset", two_s, cfg_.offset_source == OffsetSource::input ? C : Cp, rng);
    add_projection(params_, "out", C, back_in, rng);
    if (pretrained) {
      params_.at("out.weight").fill(T{0});
      params_.at("out.bias").fill(T{0});
    }
  } else {
    add_projection(params_, "reduce", Cp, C, rng);
    add_batch_norm(params_, "reduce_bn", Cp);
    if (cfg_.bottleneck_projections) {
      add_projection(params_, "theta", Cp, Cp, rng);
      add_projection(params_, "phi", Cp, Cp, rng);
      add_projection(params_, "g", Cp, Cp, rng);
    }
    add_projection(params_, "offset", two_s, Cp, rng);
    add_projection(params_, "expand", C, back_in, rng);
    add_batch_norm(params_, "expand_bn", C);
    bn_.emplace("reduce_bn", BatchNormStats<T>::fresh(Cp));
    bn_.emplace("expand_bn", BatchNormStats<T>::fresh(C));
    if (pretrained) {
      for (const char* name : {"expand.weight", "expand.bias", "expand_bn.gamma", "expand_bn.beta"}) {
        params_.at(name).fill(T{0});
      }
    }
  }
}

template <Real T>
Var<T> RepGraphLayer<T>::forward(Var<T> x, const BoundParams<T>& p, const ForwardOptions<T>& opt) {
  return repgraph_block(x, p, bn_, cfg_, opt);
}

template <Real T>
Tensor4<T> RepGraphLayer<T>::forward(const Tensor4<T>& x, const ForwardOptions<T>& opt) {
  return forward_as(x, cfg_.grid_size, cfg_.groups, opt);
}

template <Real T>
Tensor4<T> RepGraphLayer<T>::forward_as(const Tensor4<T>& x, std::size_t grid_size, std::size_t groups,
                                        const ForwardOptions<T>& opt) {
  LayerConfig cfg = cfg_;
  cfg.grid_size = grid_size;
  cfg.groups = groups;
  Tape<T> tape(false);
  const auto bound = bind(tape, params_, false);
  return repgraph_block(tape.constant(x), bound, bn_, cfg, opt).value();
}

template <Real T>
NonLocalParams<T> RepGraphLayer<T>::matching_nonlocal() const {
  if (cfg_.variant != Variant::simple) {
    throw Error(ErrorCode::contract, "only the simple variant maps onto a non-local block");
  }
  NonLocalConfig nl{cfg_.channels, cfg_.inner, cfg_.fusion, InitMode::fresh, cfg_.seed};
  NonLocalParams<T> out = NonLocalParams<T>::create(nl);
  for (auto& [name, value] : out.params.entries()) value = params_.at(name);
  return out;
}

template <Real T>
Tensor4<T> simple_repgraph_forward(const Tensor4<T>& x, RepGraphLayer<T>& layer, const ForwardOptions<T>& opt) {
  if (layer.config().variant != Variant::simple) throw Error(ErrorCode::contract, "layer is not a simple RepGraph");
  return layer.forward(x, opt);
}

template <Real T>
Tensor4<T> bottleneck_repgraph_forward(const Tensor4<T>& x, RepGraphLayer<T>& layer, const ForwardOptions<T>& opt) {
  if (layer.config().variant != Variant::bottleneck) {
    throw Error(ErrorCode::contract, "layer is not a bottleneck RepGraph");
  }
  return layer.forward(x, opt);
}

#define REPGRAPH_INSTANTIATE_LAYER(T)                                                                         \
  template struct OffsetField<T>;                                                                             \
  template struct AttentionWeights<T>;                                                                        \
  template class RepGraphLayer<T>;                                                                            \
  template OffsetField<T> regress_offsets<T>(const Tensor4<T>&, const Projection1x1<T>&);                     \
  template RepresentativeSet<T> sample_representative<T>(const Tensor4<T>&, const OffsetField<T>&, std::size_t); \
  template std::pair<Tensor4<T>, AttentionWeights<T>> repgraph_attention<T>(                                  \
      const Tensor4<T>&, const RepresentativeSet<T>&, const RepresentativeSet<T>&, std::size_t, std::size_t);  \
  template Var<T> repgraph_block<T>(Var<T>, const BoundParams<T>&, std::map<std::string, BatchNormStats<T>>&,  \
                                    const LayerConfig&, const ForwardOptions<T>&);                            \
  template Tensor4<T> simple_repgraph_forward<T>(const Tensor4<T>&, RepGraphLayer<T>&, const ForwardOptions<T>&); \
  template Tensor4<T> bottleneck_repgraph_forward<T>(const Tensor4<T>&, RepGraphLayer<T>&,                   \
                                                     const ForwardOptions<T>&);

REPGRAPH_INSTANTIATE_LAYER(float)
REPGRAPH_INSTANTIATE_LAYER(double)

}  // namespace repgraph
