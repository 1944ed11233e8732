#include <gtest/gtest.h>

#include "dropact/tensor.hpp"
#include "test_support.hpp"

using namespace dropact;

TEST(Tensor, RejectsMismatchedDataLength) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
}

TEST(Tensor, MatmulIdentity) {
  const auto out = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{5}, {7}}));
  EXPECT_EQ(out, Tensor::matrix({{5}, {7}}));
}

TEST(Tensor, MatmulHandArithmetic) {
  const auto out = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}}));
  EXPECT_EQ(out, Tensor::matrix({{3}, {7}}));
}

TEST(Tensor, MatmulMismatchNamesBothShapes) {
  try {
    matmul(Tensor::matrix({{1, 2, 3}}), Tensor::matrix({{1, 2}}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[1x2]"), std::string::npos) << msg;
  }
}

TEST(Tensor, MatmulRejectsNonFiniteResult) {
  const double big = 1e308;
  EXPECT_THROW(matmul(Tensor::matrix({{big, big}}), Tensor::matrix({{big}, {big}})), NumericError);
}

TEST(Tensor, TransposedProductsAgreeWithExplicitTranspose) {
  Rng rng(3);
  const auto a = fixtures::random_tensor({3, 5}, rng);
  const auto b = fixtures::random_tensor({4, 5}, rng);
  const auto c = fixtures::random_tensor({3, 4}, rng);
  EXPECT_EQ(matmul_nt(a, b), matmul(a, transpose(b)));
  const auto tn = matmul_tn(a, c);
  const auto ref = matmul(transpose(a), c);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], ref[i], 1e-14);
}

TEST(Tensor, MatmulAssociativityOnRandomChains) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = fixtures::random_tensor({4, 4}, rng);
    const auto b = fixtures::random_tensor({4, 4}, rng);
    const auto c = fixtures::random_tensor({4, 4}, rng);
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) ASSERT_NEAR(left[i], right[i], 1e-12);
  }
}

TEST(Tensor, PairwiseSumMatchesCompensatedReference) {
  std::vector<double> xs(10000, 0.1);
  EXPECT_NEAR(pairwise_sum(xs), 1000.0, 1e-10);
}
