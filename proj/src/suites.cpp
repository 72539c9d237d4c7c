#include "repgraph/suites.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>

#include "repgraph/conv.hpp"
#include "repgraph/error.hpp"
#include "repgraph/gradcheck.hpp"
#include "repgraph/graph_ops.hpp"
#include "repgraph/nonlocal.hpp"

namespace repgraph {
namespace {

using T = double;
using Fn = GraphFn<T>;

struct Case {
  std::string name;
  std::function<void(Rng&, std::vector<Tensor4<T>>&, Fn&)> setup;
};

Tensor4<T> rnd(Rng& rng, Shape4 s, double lo = -1.0, double hi = 1.0) { return rng.uniform_tensor<T>(s, lo, hi); }

// Random weighting keeps every output coordinate in the scalar objective.
Var<T> weighted_sum(Var<T> y, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdefULL);
  const Var<T> r = y.tape->constant(rnd(rng, y.shape()));
  return ag::sum(ag::mul(y, r));
}

// Integer part in [-2, 1], fractional part in [0.2, 0.8].
Tensor4<T> safe_offsets(Rng& rng, Shape4 s) {
  Tensor4<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(static_cast<double>(rng.below(4)) - 2.0 + rng.uniform(0.2, 0.8));
  return t;
}

Tensor4<T> away_from_zero(Rng& rng, Shape4 s) {
  Tensor4<T> t(s);
  for (auto& v : t.data()) {
    const double m = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

Case layer_case(std::string name, LayerConfig cfg, Shape4 xs) {
  return {std::move(name), [cfg, xs](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) mutable {
            cfg.seed = rng.next_u64();
            auto layer = std::make_shared<RepGraphLayer<T>>(cfg);
            auto& params = layer->params();
            for (auto& v : params.at("offset.weight").data()) v *= T(0.05);
            for (auto& v : params.at("offset.bias").data()) v = static_cast<T>(0.5 + double(rng.below(3)) - 1.0);
            // Nonzero fusion weights even for configurations that start them at zero.
            for (const char* name : {"out.weight", "expand.weight"}) {
              if (params.contains(name)) {
                for (auto& v : params.at(name).data()) v = static_cast<T>(rng.uniform(-0.5, 0.5));
              }
            }
            if (params.contains("expand_bn.gamma")) params.at("expand_bn.gamma").fill(T{1});
            in.push_back(rnd(rng, xs));
            std::vector<std::string> names;
            for (const auto& [n, v] : params.entries()) {
              names.push_back(n);
              in.push_back(v);
            }
            const std::uint64_t wseed = rng.next_u64();
            f = [layer, names, wseed](Tape<T>& tape, std::span<const Var<T>> v) {
              (void)tape;
              BoundParams<T> bound;
              for (std::size_t i = 0; i < names.size(); ++i) bound.set(names[i], v[i + 1]);
              ForwardOptions<T> opt;
              opt.training = true;
              OffsetField<T> offsets;
              opt.offsets_out = &offsets;
              const Var<T> y = layer->forward(v[0], bound, opt);
              if (min_integer_distance(offsets.field) < 0.1) {
                throw Error(ErrorCode::contract, "sampling position within 0.1 of an integer");
              }
              return weighted_sum(y, wseed);
            };
          }};
}

std::vector<Case> cases() {
  std::vector<Case> c;
  auto binary = [](std::string name, std::function<Var<T>(Var<T>, Var<T>)> op, Shape4 sa, Shape4 sb) {
    return Case{std::move(name), [op, sa, sb](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                  in = {rnd(rng, sa), rnd(rng, sb)};
                  const std::uint64_t ws = rng.next_u64();
                  f = [op, ws](Tape<T>&, std::span<const Var<T>> v) { return weighted_sum(op(v[0], v[1]), ws); };
                }};
  };
  const Shape4 s4{2, 3, 4, 5};
  c.push_back(binary("add", [](Var<T> a, Var<T> b) { return ag::add(a, b); }, s4, s4));
  c.push_back(binary("mul", [](Var<T> a, Var<T> b) { return ag::mul(a, b); }, s4, s4));
  c.push_back(binary("concat_channels", [](Var<T> a, Var<T> b) { return ag::concat_channels(a, b); }, s4,
                     Shape4{2, 2, 4, 5}));
  c.push_back({"scale", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {rnd(rng, Shape4{1, 2, 3, 3})};
                 const std::uint64_t ws = rng.next_u64();
                 f = [ws](Tape<T>&, std::span<const Var<T>> v) { return weighted_sum(ag::scale(v[0], T(1.7)), ws); };
               }});
  c.push_back({"mean", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {rnd(rng, Shape4{2, 2, 3, 3})};
                 f = [](Tape<T>&, std::span<const Var<T>> v) { return ag::mean(ag::mul(v[0], v[0])); };
               }});
  c.push_back({"relu", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {away_from_zero(rng, Shape4{1, 3, 4, 4})};
                 const std::uint64_t ws = rng.next_u64();
                 f = [ws](Tape<T>&, std::span<const Var<T>> v) { return weighted_sum(ag::relu(v[0]), ws); };
               }});
  c.push_back({"project_1x1", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {rnd(rng, Shape4{2, 4, 3, 3}), rnd(rng, Shape4{3, 4, 1, 1}), rnd(rng, Shape4{1, 3, 1, 1})};
                 const std::uint64_t ws = rng.next_u64();
                 f = [ws](Tape<T>&, std::span<const Var<T>> v) { return weighted_sum(ag::project<T>(v[0], v[1], v[2]), ws); };
               }});
  for (bool training : {true, false}) {
    c.push_back({training ? "batch_norm_train" : "batch_norm_eval",
                 [training](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                   in = {rnd(rng, Shape4{3, 4, 3, 3}), rnd(rng, Shape4{1, 4, 1, 1}, 0.5, 1.5),
                         rnd(rng, Shape4{1, 4, 1, 1})};
                   auto stats = std::make_shared<BatchNormStats<T>>(BatchNormStats<T>::fresh(4));
                   stats->running_mean = rnd(rng, Shape4{1, 4, 1, 1}).vec();
                   stats->running_var = rnd(rng, Shape4{1, 4, 1, 1}, 0.5, 2.0).vec();
                   const std::uint64_t ws = rng.next_u64();
                   f = [stats, training, ws](Tape<T>&, std::span<const Var<T>> v) {
                     BatchNormStats<T> local = *stats;
                     return weighted_sum(ag::batch_norm(v[0], v[1], v[2], local, training), ws);
                   };
                 }});
  }
  for (std::size_t g : {2, 3}) {
    c.push_back({"avg_pool_grid_g" + std::to_string(g), [g](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                   in = {rnd(rng, Shape4{1, 3, 5, 5})};
                   const std::uint64_t ws = rng.next_u64();
                   f = [g, ws](Tape<T>&, std::span<const Var<T>> v) { return weighted_sum(ag::avg_pool_grid(v[0], g), ws); };
                 }});
  }
  for (std::size_t stride : {1, 2}) {
    c.push_back({"sample_offsets_stride" + std::to_string(stride),
                 [stride](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                   const std::size_t hg = (5 + stride - 1) / stride;
                   in = {rnd(rng, Shape4{1, 3, 5, 5}), safe_offsets(rng, Shape4{1, 6, hg, hg})};
                   const std::uint64_t ws = rng.next_u64();
                   f = [stride, ws](Tape<T>&, std::span<const Var<T>> v) {
                     return weighted_sum(ag::sample_offsets(v[0], v[1], stride), ws);
                   };
                 }});
  }
  c.push_back({"dense_attention", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {rnd(rng, Shape4{1, 4, 3, 4}), rnd(rng, Shape4{1, 4, 3, 4}), rnd(rng, Shape4{1, 4, 3, 4})};
                 const std::uint64_t ws = rng.next_u64();
                 f = [ws](Tape<T>&, std::span<const Var<T>> v) {
                   return weighted_sum(ag::dense_attention(v[0], v[1], v[2]), ws);
                 };
               }});
  for (auto [stride, groups] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 2}, {2, 1}}) {
    c.push_back({"sparse_attention_s" + std::to_string(stride) + "_g" + std::to_string(groups),
                 [stride, groups](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                   const std::size_t S = 3;
                   const std::size_t hg = (4 + stride - 1) / stride;
                   in = {rnd(rng, Shape4{1, 4, 4, 4}), rnd(rng, Shape4{1, S * 4, hg, hg}),
                         rnd(rng, Shape4{1, S * 4, hg, hg})};
                   const std::uint64_t ws = rng.next_u64();
                   f = [stride, groups, ws](Tape<T>&, std::span<const Var<T>> v) {
                     return weighted_sum(ag::sparse_attention(v[0], v[1], v[2], stride, groups), ws);
                   };
                 }});
  }
  c.push_back({"softmax_cross_entropy", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {rnd(rng, Shape4{2, 4, 3, 3}, -2.0, 2.0)};
                 std::vector<int> labels(18);
                 for (auto& l : labels) l = static_cast<int>(rng.below(4));
                 f = [labels](Tape<T>&, std::span<const Var<T>> v) { return ag::softmax_cross_entropy(v[0], labels); };
               }});
  c.push_back({"conv3x3", [](Rng& rng, std::vector<Tensor4<T>>& in, Fn& f) {
                 in = {rnd(rng, Shape4{2, 3, 4, 5}), rnd(rng, Shape4{2, 3, 3, 3}), rnd(rng, Shape4{1, 2, 1, 1})};
                 const std::uint64_t ws = rng.next_u64();
                 f = [ws](Tape<T>&, std::span<const Var<T>> v) { return weighted_sum(ag::conv3x3<T>(v[0], v[1], v[2]), ws); };
               }});

  LayerConfig simple;
  simple.channels = 6;
  simple.inner = 4;
  simple.nodes = 3;
  const Shape4 xs{1, 6, 4, 4};
  c.push_back(layer_case("simple_layer", simple, xs));
  LayerConfig concat = simple;
  concat.fusion = Fusion::concat;
  c.push_back(layer_case("simple_layer_concat", concat, xs));
  LayerConfig query = simple;
  query.offset_source = OffsetSource::query;
  c.push_back(layer_case("simple_layer_query_offsets", query, xs));
  LayerConfig bottleneck = simple;
  bottleneck.variant = Variant::bottleneck;
  c.push_back(layer_case("bottleneck_layer", bottleneck, Shape4{2, 6, 4, 4}));
  LayerConfig bottleneck_proj = bottleneck;
  bottleneck_proj.bottleneck_projections = true;
  c.push_back(layer_case("bottleneck_layer_projections", bottleneck_proj, Shape4{2, 6, 4, 4}));
  LayerConfig grid = simple;
  grid.grid_size = 2;
  c.push_back(layer_case("grid_layer_gs2", grid, Shape4{1, 6, 5, 5}));
  LayerConfig group = simple;
  group.groups = 2;
  c.push_back(layer_case("group_layer_g2", group, xs));
  return c;
}

}  // namespace

template <Real U>
double min_integer_distance(const Tensor4<U>& offsets) {
  double d = 0.5;
  for (U v : offsets.data()) {
    const double x = static_cast<double>(v);
    d = std::min(d, std::abs(x - std::round(x)));
  }
  return d;
}

std::vector<std::string> gradient_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : cases()) names.push_back(c.name);
  return names;
}

std::vector<GradSuiteRow> run_gradient_suite(const std::vector<std::uint64_t>& seeds, double eps, double tolerance) {
  std::vector<GradSuiteRow> rows;
  for (const auto& c : cases()) {
    for (std::uint64_t seed : seeds) {
      GradSuiteRow row;
      row.name = c.name;
      row.seed = seed;
      try {
        Rng rng(seed);
        std::vector<Tensor4<T>> inputs;
        Fn f;
        c.setup(rng, inputs, f);
        const GradCheckReport rep = gradient_check<T>(f, std::move(inputs), eps, tolerance);
        row.max_rel_error = rep.worst();
        row.passed = rep.passed;
        row.detail = rep.failure;
      } catch (const Error& e) {
        row.passed = false;
        row.detail = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_gradient_csv(std::ostream& os, const std::vector<GradSuiteRow>& rows) {
  os << "op,seed,max_rel_error,passed\n";
  os.precision(6);
  for (const auto& r : rows) os << r.name << ',' << r.seed << ',' << r.max_rel_error << ',' << (r.passed ? 1 : 0) << '\n';
}

template <Real U>
Tensor4<U> full_grid_offsets(std::size_t n, std::size_t h, std::size_t w) {
  const std::size_t S = h * w;
  Tensor4<U> o(n, 2 * S, h, w);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < S; ++k) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          o(b, 2 * k, i, j) = static_cast<U>(static_cast<double>(k / w) - static_cast<double>(i));
          o(b, 2 * k + 1, i, j) = static_cast<U>(static_cast<double>(k % w) - static_cast<double>(j));
        }
      }
    }
  }
  return o;
}

OracleResult run_dense_oracle(std::size_t h, std::size_t w, std::size_t channels, std::size_t inner,
                              std::uint64_t seed, Fusion fusion) {
  const auto t0 = std::chrono::steady_clock::now();
  LayerConfig cfg;
  cfg.channels = channels;
  cfg.inner = inner;
  cfg.nodes = h * w;
  cfg.fusion = fusion;
  cfg.seed = seed;
  RepGraphLayer<T> layer(cfg);
  Rng rng(seed ^ 0x5151ULL);
  const Tensor4<T> x = rnd(rng, Shape4{1, channels, h, w});
  const Tensor4<T> offsets = full_grid_offsets<T>(1, h, w);
  ForwardOptions<T> opt;
  opt.offsets_override = &offsets;
  const Tensor4<T> sparse = layer.forward(x, opt);
  const Tensor4<T> dense = nonlocal_forward(x, layer.matching_nonlocal());
  OracleResult r;
  r.h = h;
  r.w = w;
  for (std::size_t i = 0; i < sparse.numel(); ++i) r.max_abs_diff = std::max(r.max_abs_diff, std::abs(sparse[i] - dense[i]));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

template Tensor4<float> full_grid_offsets<float>(std::size_t, std::size_t, std::size_t);
template Tensor4<double> full_grid_offsets<double>(std::size_t, std::size_t, std::size_t);
template double min_integer_distance<float>(const Tensor4<float>&);
template double min_integer_distance<double>(const Tensor4<double>&);

}  // namespace repgraph
