#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

using namespace wtpgd;

TEST(Tensor, RejectsNonFiniteAndMismatchedData) {
  EXPECT_THROW(Tensor(Shape{2}, {1.0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{1}, {std::nan("")}), NumericError);
  EXPECT_THROW(Tensor(Shape{0, 2}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  const Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.data(), t.data());
  EXPECT_THROW(t.reshaped({4}), ShapeError);
}

TEST(Tensor, SignOfZeroIsZero) {
  const Tensor s = sign(Tensor::vector({-2.0, 0.0, 3.0, -0.0}));
  EXPECT_EQ(s.data(), (std::vector<double>{-1.0, 0.0, 1.0, 0.0}));
}

TEST(Tensor, NormsAndDistances) {
  const Tensor a = Tensor::vector({3.0, -4.0});
  const Tensor b = Tensor::vector({0.0, 0.0});
  EXPECT_DOUBLE_EQ(norm2(a), 5.0);
  EXPECT_DOUBLE_EQ(linf_norm(a), 4.0);
  EXPECT_DOUBLE_EQ(l2_distance(a, b), 5.0);
  EXPECT_DOUBLE_EQ(linf_distance(a, b), 4.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, scaled(a, 2.0)), 1.0);
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1u);
}

TEST(Rng, SameSeedAndStreamReplay) {
  Rng a(7, 3), b(7, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsDiffer) {
  const Rng root(1);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 1000; ++k) firsts.insert(root.derive(k).next_u64());
  EXPECT_EQ(firsts.size(), 1000u);
  EXPECT_EQ(root.derive({4, 5}).next_u64(), root.derive(4).derive(5).next_u64());
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng r(11);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 0.02);
}
