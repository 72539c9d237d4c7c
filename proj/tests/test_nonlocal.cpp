#include <gtest/gtest.h>

#include <cmath>

#include "repgraph/flops.hpp"
#include "repgraph/graph_ops.hpp"
#include "repgraph/linalg.hpp"
#include "repgraph/nonlocal.hpp"

using namespace repgraph;

namespace {

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

}  // namespace

TEST(NonLocal, ZeroOutputProjectionIsIdentity) {
  auto p = NonLocalParams<double>::create({8, 4, Fusion::sum, InitMode::pretrained_insert, 3});
  Rng rng(1);
  const auto x = rng.uniform_tensor<double>(Shape4{2, 8, 3, 4}, -1, 1);
  EXPECT_TRUE(nonlocal_forward(x, p).identical(x));
}

TEST(NonLocal, SingleNodeIsProjectedValuePlusInput) {
  auto p = NonLocalParams<double>::create({5, 3, Fusion::sum, InitMode::fresh, 4});
  Rng rng(2);
  for (auto& v : p.params.at("out.bias").data()) v = rng.uniform(-1, 1);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 5, 1, 1}, -1, 1);
  const auto g = project_ref(x, p.params, "g");
  const auto y = project_ref(g, p.params, "out");
  const auto out = nonlocal_forward(x, p);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(out[c], y[c] + x[c], 1e-14);
}

TEST(NonLocal, MatchesExplicitFormula) {
  for (Fusion fusion : {Fusion::sum, Fusion::concat}) {
    auto p = NonLocalParams<double>::create({6, 4, fusion, InitMode::fresh, 5});
    Rng rng(3);
    const auto x = rng.uniform_tensor<double>(Shape4{1, 6, 3, 3}, -1, 1);
    const auto q = project_ref(x, p.params, "theta");
    const auto k = project_ref(x, p.params, "phi");
    const auto v = project_ref(x, p.params, "g");
    Tensor4<double> xt(1, 4, 3, 3);
    for (std::size_t i = 0; i < 9; ++i) {
      std::vector<double> e(9);
      double z = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += q.plane(0, c)[i] * k.plane(0, c)[j];
        z += (e[j] = std::exp(s));
      }
      for (std::size_t c = 0; c < 4; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < 9; ++j) acc += e[j] / z * v.plane(0, c)[j];
        xt.plane(0, c)[i] = acc;
      }
    }
    Tensor4<double> expected;
    if (fusion == Fusion::sum) {
      expected = project_ref(xt, p.params, "out");
      for (std::size_t i = 0; i < x.numel(); ++i) expected[i] += x[i];
    } else {
      Tensor4<double> cat(1, 10, 3, 3);
      for (std::size_t i = 0; i < 9; ++i) {
        for (std::size_t c = 0; c < 4; ++c) cat.plane(0, c)[i] = xt.plane(0, c)[i];
        for (std::size_t c = 0; c < 6; ++c) cat.plane(0, 4 + c)[i] = x.plane(0, c)[i];
      }
      expected = project_ref(cat, p.params, "out");
    }
    const auto out = nonlocal_forward(x, p);
    ASSERT_EQ(out.shape(), x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
  }
}

TEST(NonLocal, AffinityRowsAreDistributions) {
  auto p = NonLocalParams<double>::create({4, 2, Fusion::sum, InitMode::fresh, 6});
  Rng rng(4);
  const auto x = rng.uniform_tensor<double>(Shape4{2, 4, 4, 5}, -2, 2);
  const auto a = nonlocal_affinity(x, p, 1);
  ASSERT_EQ(a.rows(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 20; ++j) {
      EXPECT_GE(a(i, j), 0.0);
      s += a(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
}

TEST(NonLocal, ChannelMismatch) {
  auto p = NonLocalParams<double>::create({4, 2, Fusion::sum, InitMode::fresh, 6});
  try {
    (void)nonlocal_forward(Tensor4<double>(1, 3, 2, 2), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension);
  }
}

TEST(NonLocal, ConcatWithPretrainedInsertRejected) {
  try {
    (void)NonLocalParams<double>::create({4, 2, Fusion::concat, InitMode::pretrained_insert, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
}

TEST(NonLocal, ZeroInitBranchStillReceivesGradient) {
  auto p = NonLocalParams<double>::create({4, 2, Fusion::sum, InitMode::pretrained_insert, 1});
  Rng rng(7);
  Tape<double> tape;
  const auto bound = bind(tape, p.params, true);
  const auto x = tape.constant(rng.uniform_tensor<double>(Shape4{1, 4, 3, 3}, -1, 1));
  const auto r = tape.constant(rng.uniform_tensor<double>(Shape4{1, 4, 3, 3}, -1, 1));
  const auto loss = ag::sum(ag::mul(nonlocal_block(x, bound, p.config), r));
  const auto g = tape.backward(loss);
  double norm = 0;
  for (double v : g[bound["out.weight"]].data()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(NonLocal, CountedAttentionMacsAreQuadratic) {
  std::vector<double> ns, macs;
  for (std::size_t side : {8, 16, 32, 64}) {
    Geometry g;
    g.h = g.w = side;
    g.channels = 64;
    g.inner = 16;
    ns.push_back(double(side * side));
    macs.push_back(double(attention_core_macs(Block::nl, g)));
  }
  for (std::size_t i = 1; i < ns.size(); ++i) {
    EXPECT_NEAR(std::log(macs[i] / macs[i - 1]) / std::log(ns[i] / ns[i - 1]), 2.0, 1e-12);
  }
}
