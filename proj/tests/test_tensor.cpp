#include <gtest/gtest.h>

#include "repgraph/linalg.hpp"
#include "repgraph/rng.hpp"

using namespace repgraph;

namespace {

Matrix<double> random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix<double> m(r, c);
  for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor4<double> t(2, 3, 4, 5);
  EXPECT_EQ(t.numel(), 120u);
  t(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t[119], 7.0);
  EXPECT_EQ(t.plane(1, 2)[19], 7.0);
  EXPECT_EQ(t.shape().str(), "(2,3,4,5)");
}

TEST(Tensor, DataLengthMustMatchShape) {
  try {
    Tensor4<float> t(Shape4{1, 2, 2, 2}, std::vector<float>(7));
    FAIL() << "expected length mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::length_mismatch);
  }
}

TEST(Tensor, IdenticalIsBitwise) {
  Tensor4<double> a(1, 1, 1, 2, 0.0);
  Tensor4<double> b = a;
  EXPECT_TRUE(a.identical(b));
  b[1] = -0.0;
  EXPECT_FALSE(a.identical(b));
  EXPECT_FALSE(a.identical(Tensor4<double>(1, 1, 2, 1)));
}

TEST(Tensor, CastAndFinite) {
  Tensor4<double> a(1, 1, 1, 3, 0.5);
  EXPECT_TRUE(a.all_finite());
  const Tensor4<float> f = a.cast<float>();
  EXPECT_EQ(f[2], 0.5f);
  a[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(a.all_finite());
}

TEST(Matmul, IdentityTimesMatrix) {
  Matrix<double> id(2, 2, std::vector<double>{1, 0, 0, 1});
  Matrix<double> b(2, 2, std::vector<double>{5, 6, 7, 8});
  EXPECT_EQ(matmul(id, b).data()[0], 5);
  const auto c = matmul(id, b);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{5, 6, 7, 8}));
}

TEST(Matmul, RowTimesColumn) {
  Matrix<double> a(1, 2, std::vector<double>{1, 2});
  Matrix<double> b(2, 1, std::vector<double>{3, 4});
  EXPECT_EQ(matmul(a, b)(0, 0), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  const auto a = random_matrix(rng, 7, 5);
  const auto b = random_matrix(rng, 5, 3);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    (void)matmul(Matrix<double>(2, 3), Matrix<double>(4, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeOnRandomChains) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto a = random_matrix(rng, 8, 8);
    const auto b = random_matrix(rng, 8, 8);
    const auto c = random_matrix(rng, 8, 8);
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < 64; ++i) {
      const double scale = std::max(1.0, std::abs(left.data()[i]));
      EXPECT_LE(std::abs(left.data()[i] - right.data()[i]) / scale, 1e-10);
    }
  }
}

TEST(ReshapeNodes, SmallShapes) {
  Rng rng(1);
  const auto x = rng.uniform_tensor<double>(Shape4{1, 3, 2, 2}, -1, 1);
  const auto m = reshape_nodes(x);
  EXPECT_EQ(m.rows(), 4u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_TRUE(unreshape_nodes(m, x.shape()).identical(x));

  const auto d = reshape_nodes(Tensor4<double>(2, 1, 1, 1));
  EXPECT_EQ(d.rows(), 2u);
  EXPECT_EQ(d.cols(), 1u);
}

TEST(ReshapeNodes, MatchesIndexArithmetic) {
  Rng rng(2);
  const auto x = rng.uniform_tensor<double>(Shape4{2, 4, 3, 5}, -1, 1);
  const auto m = reshape_nodes(x);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t xx = 0; xx < 5; ++xx) EXPECT_EQ(m(b * 15 + y * 5 + xx, c), x(b, c, y, xx));
}

TEST(ReshapeNodes, RoundTripOverShapeSweep) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const Shape4 s{1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8)};
    const auto x = rng.uniform_tensor<float>(s, -1, 1);
    EXPECT_TRUE(unreshape_nodes(reshape_nodes(x), s).identical(x)) << s.str();
  }
}

TEST(Rng, EqualSeedsGiveEqualTensors) {
  Rng a(42), b(42), c(43);
  const auto ta = fan_in_uniform<double>(Shape4{4, 3, 1, 1}, 3, a);
  const auto tb = fan_in_uniform<double>(Shape4{4, 3, 1, 1}, 3, b);
  const auto tc = fan_in_uniform<double>(Shape4{4, 3, 1, 1}, 3, c);
  EXPECT_TRUE(ta.identical(tb));
  EXPECT_FALSE(ta.identical(tc));
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : ta.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Rng, UniformStaysInRange) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}
