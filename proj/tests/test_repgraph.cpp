#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "repgraph/graph_ops.hpp"
#include "repgraph/repgraph.hpp"
#include "repgraph/suites.hpp"

using namespace repgraph;

namespace {

LayerConfig simple_cfg(std::size_t c, std::size_t cp, std::size_t s, std::uint64_t seed) {
  LayerConfig cfg;
  cfg.channels = c;
  cfg.inner = cp;
  cfg.nodes = s;
  cfg.seed = seed;
  return cfg;
}

double kernel(double ty, double tx, double py, double px) {
  return std::max(0.0, 1 - std::abs(ty - py)) * std::max(0.0, 1 - std::abs(tx - px));
}

Tensor4<double> project_ref(const Tensor4<double>& x, const ParamSet<double>& p, const std::string& name) {
  const auto& w = p.at(name + ".weight");
  const auto& b = p.at(name + ".bias");
  Tensor4<double> y(x.n(), w.n(), x.h(), x.w());
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < w.n(); ++o)
      for (std::size_t i = 0; i < x.shape().spatial(); ++i) {
        double s = b[o];
        for (std::size_t c = 0; c < w.c(); ++c) s += w(o, c, 0, 0) * x.plane(n, c)[i];
        y.plane(n, o)[i] = s;
      }
  return y;
}

// Sum over every grid node of G(t, p) x(t), softmax over the S samples,
// then W_y and the residual. No shared code with the layer.
Tensor4<double> reference_simple(const Tensor4<double>& x, const ParamSet<double>& p, std::size_t S) {
  const auto q = project_ref(x, p, "theta");
  const auto k = project_ref(x, p, "phi");
  const auto v = project_ref(x, p, "g");
  const auto off = project_ref(x, p, "offset");
  const std::size_t H = x.h(), W = x.w(), Cp = q.c();
  Tensor4<double> xt(x.n(), Cp, H, W);
  for (std::size_t b = 0; b < x.n(); ++b)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        std::vector<double> logit(S);
        std::vector<std::vector<double>> vs(S, std::vector<double>(Cp));
        for (std::size_t s = 0; s < S; ++s) {
          const double py = i + off(b, 2 * s, i, j);
          const double px = j + off(b, 2 * s + 1, i, j);
          std::vector<double> ks(Cp);
          for (std::size_t ty = 0; ty < H; ++ty)
            for (std::size_t tx = 0; tx < W; ++tx) {
              const double g = kernel(double(ty), double(tx), py, px);
              if (g == 0) continue;
              for (std::size_t c = 0; c < Cp; ++c) {
                ks[c] += g * k(b, c, ty, tx);
                vs[s][c] += g * v(b, c, ty, tx);
              }
            }
          for (std::size_t c = 0; c < Cp; ++c) logit[s] += q(b, c, i, j) * ks[c];
        }
        double mx = *std::max_element(logit.begin(), logit.end());
        double z = 0;
        for (auto& l : logit) z += (l = std::exp(l - mx));
        for (std::size_t c = 0; c < Cp; ++c) {
          double acc = 0;
          for (std::size_t s = 0; s < S; ++s) acc += logit[s] / z * vs[s][c];
          xt(b, c, i, j) = acc;
        }
      }
  auto y = project_ref(xt, p, "out");
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += x[i];
  return y;
}

void spread_offsets(RepGraphLayer<double>& layer, double bias_scale) {
  auto& w = layer.params().at("offset.weight");
  for (auto& v : w.data()) v *= 0.2;
  Rng rng(99);
  for (auto& v : layer.params().at("offset.bias").data()) v = rng.uniform(-bias_scale, bias_scale);
}

}  // namespace

TEST(RepGraph, SimpleLayerMatchesBruteForceReference) {
  for (std::uint64_t seed : {1, 2, 3}) {
    RepGraphLayer<double> layer(simple_cfg(5, 3, 4, seed));
    spread_offsets(layer, 2.5);
    Rng rng(seed + 10);
    for (auto& v : layer.params().at("out.weight").data()) v = rng.uniform(-1, 1);
    const auto x = rng.uniform_tensor<double>(Shape4{2, 5, 4, 5}, -1, 1);
    const auto out = layer.forward(x);
    const auto ref = reference_simple(x, layer.params(), 4);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  }
}

TEST(RepGraph, FullGridOffsetsReproduceDenseNonLocal) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_dense_oracle(6, 6, 8, 4, 3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(r.max_abs_diff, 1e-6);
  EXPECT_LT(secs, 1.0);
  EXPECT_LT(run_dense_oracle(6, 6, 8, 4, 4, Fusion::concat).max_abs_diff, 1e-6);
  EXPECT_LT(run_dense_oracle(3, 5, 4, 2, 5).max_abs_diff, 1e-6);
}

TEST(RepGraph, DenseComparisonDetectsAMovedSample) {
  RepGraphLayer<double> layer(simple_cfg(8, 4, 36, 3));
  Rng rng(5);
  for (auto& v : layer.params().at("out.weight").data()) v = rng.uniform(-1, 1);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 8, 6, 6}, -1, 1);
  auto offsets = full_grid_offsets<double>(1, 6, 6);
  ForwardOptions<double> opt;
  opt.offsets_override = &offsets;
  const auto dense = nonlocal_forward(x, layer.matching_nonlocal());
  const auto exact = layer.forward(x, opt);
  double diff = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) diff = std::max(diff, std::abs(exact[i] - dense[i]));
  EXPECT_LT(diff, 1e-6);

  // Sample 0 of query (2, 2) now lands halfway between two nodes.
  offsets(0, 0, 2, 2) += 0.5;
  const auto moved = layer.forward(x, opt);
  diff = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) diff = std::max(diff, std::abs(moved[i] - dense[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(RepGraph, PretrainedInsertIsIdentityAtInit) {
  Rng rng(11);
  for (Variant v : {Variant::simple, Variant::bottleneck}) {
    LayerConfig cfg = simple_cfg(6, 4, 9, 7);
    cfg.variant = v;
    cfg.init_mode = InitMode::pretrained_insert;
    RepGraphLayer<double> layer(cfg);
    for (int t = 0; t < 10; ++t) {
      const auto x = rng.uniform_tensor<double>(Shape4{2, 6, 5, 4}, -3, 3);
      EXPECT_TRUE(layer.forward(x).identical(x)) << to_string(v) << " tensor " << t;
    }
  }
}

TEST(RepGraph, WeightRowsAreDistributions) {
  Rng rng(12);
  for (std::size_t S : {1, 9, 27}) {
    RepGraphLayer<double> layer(simple_cfg(6, 4, S, S));
    spread_offsets(layer, 3.0);
    const auto x = rng.uniform_tensor<double>(Shape4{2, 6, 7, 5}, -4, 4);
    AttentionWeights<double> w;
    ForwardOptions<double> opt;
    opt.weights_out = &w;
    (void)layer.forward(x, opt);
    EXPECT_EQ(w.nodes(), S);
    EXPECT_LE(w.max_row_sum_error(), 1e-10);
    EXPECT_GE(w.min_entry(), 0.0);
  }
}

TEST(RepGraph, SingleSampleHasWeightOne) {
  RepGraphLayer<double> layer(simple_cfg(3, 2, 1, 1));
  Rng rng(13);
  AttentionWeights<double> w;
  ForwardOptions<double> opt;
  opt.weights_out = &w;
  (void)layer.forward(rng.uniform_tensor<double>(Shape4{1, 3, 3, 3}, -1, 1), opt);
  for (double v : w.weights.data()) EXPECT_EQ(v, 1.0);
}

TEST(RepGraph, ZeroQueryGivesUniformWeights) {
  RepGraphLayer<double> layer(simple_cfg(3, 2, 5, 1));
  layer.params().at("theta.weight").fill(0.0);
  layer.params().at("theta.bias").fill(0.0);
  Rng rng(14);
  AttentionWeights<double> w;
  ForwardOptions<double> opt;
  opt.weights_out = &w;
  (void)layer.forward(rng.uniform_tensor<double>(Shape4{1, 3, 4, 4}, -1, 1), opt);
  for (double v : w.weights.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(RepGraph, ZeroOffsetsSampleTheQueryPosition) {
  Rng rng(15);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 3, 4, 4}, -1, 1);
  const OffsetField<double> off = OffsetField<double>::wrap(Tensor4<double>(1, 6, 4, 4));
  const auto set = sample_representative(x, off);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(set.features(0, s * 3 + c, i, j), x(0, c, i, j));

  // With every sample on the query node the aggregate is g(x) itself.
  RepGraphLayer<double> layer(simple_cfg(3, 2, 3, 2));
  layer.params().at("offset.weight").fill(0.0);
  layer.params().at("offset.bias").fill(0.0);
  layer.params().at("out.weight").fill(0.0);
  for (std::size_t c = 0; c < 2; ++c) layer.params().at("out.weight")(c, c, 0, 0) = 1.0;
  const auto out = layer.forward(x);
  const auto g = project_ref(x, layer.params(), "g");
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(out.plane(0, c)[i] - x.plane(0, c)[i], g.plane(0, c)[i], 1e-14);
}

TEST(RepGraph, BiasOnlyOffsetsShiftOneRowDown) {
  Rng rng(16);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 2, 4, 3}, -1, 1);
  Projection1x1<double> w{Tensor4<double>(2, 2, 1, 1), Tensor4<double>(1, 2, 1, 1)};
  w.bias->data()[0] = 1.0;
  const auto off = regress_offsets(x, w);
  const auto set = sample_representative(x, off);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(set.positions(0, 0, i, j), double(i + 1));
        EXPECT_EQ(set.positions(0, 1, i, j), double(j));
        EXPECT_EQ(set.features(0, c, i, j), i + 1 < 4 ? x(0, c, i + 1, j) : 0.0);
      }
}

TEST(RepGraph, RegressOffsetsIsAProjection) {
  Rng rng(17);
  const auto x = rng.uniform_tensor<double>(Shape4{2, 3, 2, 2}, -1, 1);
  Projection1x1<double> w{rng.uniform_tensor<double>(Shape4{4, 3, 1, 1}, -1, 1),
                          rng.uniform_tensor<double>(Shape4{1, 4, 1, 1}, -1, 1)};
  const auto off = regress_offsets(x, w);
  ASSERT_EQ(off.nodes(), 2u);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t i = 0; i < 4; ++i) {
        double s = (*w.bias)[o];
        for (std::size_t c = 0; c < 3; ++c) s += w.weight(o, c, 0, 0) * x.plane(b, c)[i];
        EXPECT_NEAR(off.field.plane(b, o)[i], s, 1e-14);
      }
  Projection1x1<double> odd{Tensor4<double>(3, 3, 1, 1), std::nullopt};
  EXPECT_THROW((void)regress_offsets(x, odd), Error);
}

TEST(RepGraph, SamplerMatchesFourNeighbourFormula) {
  Rng rng(18);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 2, 5, 5}, -1, 1);
  auto f = Tensor4<double>(1, 2, 5, 5);
  for (auto& v : f.data()) v = rng.uniform(-1.6, 1.6);
  const auto set = sample_representative(x, OffsetField<double>::wrap(f));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double py = i + f(0, 0, i, j), px = j + f(0, 1, i, j);
      for (std::size_t c = 0; c < 2; ++c) {
        double ref = 0;
        for (std::size_t ty = 0; ty < 5; ++ty)
          for (std::size_t tx = 0; tx < 5; ++tx) ref += kernel(double(ty), double(tx), py, px) * x(0, c, ty, tx);
        EXPECT_NEAR(set.features(0, c, i, j), ref, 1e-14);
      }
    }
  // Far outside the map.
  f.fill(-10.0);
  const auto out = sample_representative(x, OffsetField<double>::wrap(f));
  for (double v : out.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(RepGraph, SingleNodeHandTrace) {
  // N = 1, S = 1, C = C' = 1: the sample is the node itself, weight 1, so
  // y = w_o * (w_g x + b_g) + b_o + x.
  RepGraphLayer<double> layer(simple_cfg(1, 1, 1, 0));
  auto& p = layer.params();
  p.at("g.weight").fill(2.0);
  p.at("g.bias").fill(0.5);
  p.at("out.weight").fill(3.0);
  p.at("out.bias").fill(-1.0);
  p.at("offset.weight").fill(0.0);
  Tensor4<double> x(1, 1, 1, 1);
  x[0] = 0.25;
  EXPECT_NEAR(layer.forward(x)[0], 3.0 * (2.0 * 0.25 + 0.5) - 1.0 + 0.25, 1e-15);
}

TEST(RepGraph, FreshBottleneckAppliesFinalRelu) {
  LayerConfig cfg = simple_cfg(2, 2, 1, 0);
  cfg.variant = Variant::bottleneck;
  RepGraphLayer<double> layer(cfg);
  Rng rng(19);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 2, 3, 3}, -5, 5);
  const auto y = layer.forward(x);
  for (double v : y.data()) EXPECT_GE(v, 0.0);
}

TEST(RepGraph, GradientReachesOffsetsAndZeroInitOutput) {
  for (InitMode mode : {InitMode::fresh, InitMode::pretrained_insert}) {
    LayerConfig cfg = simple_cfg(4, 2, 3, 5);
    cfg.init_mode = mode;
    RepGraphLayer<double> layer(cfg);
    spread_offsets(layer, 1.3);
    Rng rng(20);
    Tape<double> tape;
    const auto bound = bind(tape, layer.params(), true);
    const auto x = tape.constant(rng.uniform_tensor<double>(Shape4{1, 4, 4, 4}, -1, 1));
    const auto r = tape.constant(rng.uniform_tensor<double>(Shape4{1, 4, 4, 4}, -1, 1));
    const auto loss = ag::sum(ag::mul(layer.forward(x, bound), r));
    const auto g = tape.backward(loss);
    auto norm = [&](const char* name) {
      double n = 0;
      for (double v : g[bound[name]].data()) n += v * v;
      return n;
    };
    EXPECT_GT(norm("out.weight"), 0.0);
    if (mode == InitMode::fresh) EXPECT_GT(norm("offset.weight"), 0.0);
  }
}

TEST(RepGraph, ParameterNames) {
  RepGraphLayer<double> simple(simple_cfg(4, 2, 3, 0));
  std::vector<std::string> names;
  for (const auto& e : simple.params().entries()) names.push_back(e.first);
  EXPECT_EQ(names, (std::vector<std::string>{"theta.weight", "theta.bias", "phi.weight", "phi.bias", "g.weight",
                                             "g.bias", "offset.weight", "offset.bias", "out.weight", "out.bias"}));
  EXPECT_EQ(simple.params().at("offset.weight").shape(), (Shape4{6, 4, 1, 1}));

  LayerConfig bc = simple_cfg(4, 2, 3, 0);
  bc.variant = Variant::bottleneck;
  RepGraphLayer<double> bottleneck(bc);
  EXPECT_EQ(bottleneck.params().at("offset.weight").shape(), (Shape4{6, 2, 1, 1}));
  EXPECT_EQ(bottleneck.params().at("expand.weight").shape(), (Shape4{4, 2, 1, 1}));
  EXPECT_THROW((void)bottleneck.params().at("theta.weight"), Error);
  try {
    (void)bottleneck.matching_nonlocal();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
}

TEST(RepGraph, RejectsBadConfigurationsAndShapes) {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::unsupported_op;
  };
  EXPECT_EQ(code_of([] { RepGraphLayer<double> l(simple_cfg(4, 2, 0, 0)); }), ErrorCode::config);
  EXPECT_EQ(code_of([] {
              auto c = simple_cfg(4, 2, 3, 0);
              c.fusion = Fusion::concat;
              c.init_mode = InitMode::pretrained_insert;
              RepGraphLayer<double> l(c);
            }),
            ErrorCode::config);
  RepGraphLayer<double> layer(simple_cfg(4, 2, 3, 0));
  EXPECT_EQ(code_of([&] { (void)layer.forward(Tensor4<double>(1, 3, 2, 2)); }), ErrorCode::dimension);
  Tensor4<double> wrong(1, 4, 2, 2);
  ForwardOptions<double> opt;
  opt.offsets_override = &wrong;
  EXPECT_EQ(code_of([&] { (void)layer.forward(Tensor4<double>(1, 4, 2, 2), opt); }), ErrorCode::dimension);

  RepresentativeSet<double> a, b;
  a.nodes = 2;
  b.nodes = 3;
  EXPECT_EQ(code_of([&] { (void)repgraph_attention(Tensor4<double>(1, 1, 1, 1), a, b); }), ErrorCode::dimension);
}
