#include <gtest/gtest.h>

#include <cmath>

#include "dropact/activations.hpp"
#include "test_support.hpp"

using namespace dropact;

TEST(Activations, TestFormIsLeakyBlend) {
  const auto out = drop_act_test(Tensor::vector({-2.0, 0.0, 3.0}), 0.95);
  EXPECT_NEAR(out[0], -0.1, 1e-15);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_EQ(out[2], 3.0);
}

TEST(Activations, TrainFormFollowsMask) {
  const DropMask mask{{1, 0, 1, 0}, 0.5};
  const auto out = drop_act_train(Tensor::vector({-1.0, -1.0, 2.0, 2.0}), mask);
  EXPECT_EQ(out, Tensor::vector({0.0, -1.0, 2.0, 2.0}));
}

TEST(Activations, RetainOneReducesToReluBitForBit) {
  Rng rng(4);
  const Tensor x = fixtures::random_tensor({64}, rng);
  const auto mask = sample_mask(x.size(), 1.0, rng);
  EXPECT_EQ(drop_act_train(x, mask), relu(x));
  EXPECT_EQ(drop_act_test(x, 1.0), relu(x));
  for (double v : drop_act_test(x, 1.0).data()) EXPECT_FALSE(std::signbit(v) && v == 0.0);
}

TEST(Activations, ParameterValidation) {
  EXPECT_THROW(ActivationKind::drop_act_train(0.0), ParameterError);
  EXPECT_THROW(ActivationKind::drop_act_train(1.5), ParameterError);
  EXPECT_THROW(ActivationKind::rrelu_train(0.4, 0.2), ParameterError);
  Rng rng(0);
  EXPECT_THROW(sample_mask(0, 0.5, rng), ParameterError);
  EXPECT_THROW(drop_act_train(Tensor::vector({1, 2}), DropMask{{1}, 0.5}), DimensionError);
}

TEST(Activations, StochasticKindWithoutDrawIsContractViolation) {
  EXPECT_THROW(activate(ActivationKind::drop_act_train(0.5), Tensor::vector({1.0}), {}),
               ContractError);
}

TEST(Activations, PhasePairing) {
  const auto train = ActivationKind::drop_act_train(0.8);
  EXPECT_EQ(train.for_phase(false), ActivationKind::drop_act_test(0.8));
  EXPECT_EQ(train.for_phase(true), train);
  EXPECT_EQ(ActivationKind::rrelu_train().for_phase(false), ActivationKind::rrelu_test());
  EXPECT_EQ(ActivationKind::relu().for_phase(false), ActivationKind::relu());
}

TEST(Activations, RreluTestSlopeIsMidpoint) {
  const auto out = rrelu_test(Tensor::vector({-1.0, 2.0}), 0.1, 0.3);
  EXPECT_NEAR(out[0], -0.2, 1e-15);
  EXPECT_EQ(out[1], 2.0);
}

TEST(Activations, RreluShrinkStaysInRange) {
  Rng rng(8);
  for (double s : sample_shrink(10000, 0.125, 1.0 / 3.0, rng)) {
    EXPECT_GE(s, 0.125);
    EXPECT_LE(s, 1.0 / 3.0);
  }
}

TEST(Activations, MaskFrequencyTracksRetainProbability) {
  Rng rng(12);
  const auto mask = sample_mask(200000, 0.3, rng);
  double kept = 0;
  for (auto k : mask.keep) kept += k;
  const double se = std::sqrt(0.3 * 0.7 / 200000.0);
  EXPECT_NEAR(kept / 200000.0, 0.3, 4 * se);
}

TEST(Activations, TrainFormIsUnbiasedForTestForm) {
  // Mean over many masked forwards of one input equals the test form.
  Rng rng(31);
  const Tensor x = fixtures::random_tensor({20}, rng);
  const double p = 0.6;
  const int trials = 100000;
  std::vector<double> acc(x.size(), 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto y = drop_act_train(x, sample_mask(x.size(), p, rng));
    for (std::size_t i = 0; i < x.size(); ++i) acc[i] += y[i];
  }
  const auto expected = drop_act_test(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double se = x[i] < 0 ? std::fabs(x[i]) * std::sqrt(p * (1 - p) / trials) : 0.0;
    EXPECT_LE(std::fabs(acc[i] / trials - expected[i]), 4 * se + 1e-10 * std::max(1.0, std::fabs(x[i])));
  }
}

TEST(Activations, BackwardSlopes) {
  const DropMask mask{{1, 0, 1}, 0.5};
  const auto g = activation_backward(ActivationKind::drop_act_train(0.5),
                                     Tensor::vector({-1.0, -1.0, 0.0}), Tensor::vector({2, 2, 2}),
                                     mask);
  EXPECT_EQ(g, Tensor::vector({0.0, 2.0, 2.0}));
}
