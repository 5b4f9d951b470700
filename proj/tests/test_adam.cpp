#include <gtest/gtest.h>

#include <cmath>

#include "pagan/adam.hpp"

using namespace pagan;
using T64 = nn::Tensor<double>;

namespace {

// Drives f(w) = w^2 with explicit gradient 2w through adam_step.
double run_quadratic(nn::AdamState<double>& state, T64& w, int steps) {
  std::vector<T64> params = {w};
  for (int t = 0; t < steps; ++t) {
    w.zero_grad();
    w.grad()[0] = 2.0 * w.values()[0];
    adam_step(state, params);
  }
  return w.values()[0];
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto w = T64::from_data({3}, {1.0, -2.0, 0.5}, true);
  w.zero_grad();
  nn::AdamState<double> state;
  std::vector<T64> params = {w};
  adam_step(state, params);
  EXPECT_DOUBLE_EQ(w.values()[0], 1.0);
  EXPECT_DOUBLE_EQ(w.values()[1], -2.0);
  EXPECT_DOUBLE_EQ(w.values()[2], 0.5);
}

// Hand-computed oracle trace: w0 = 1, lr = 0.1, betas (0.9, 0.999),
// eps = 1e-8, gradient 2w, bias-corrected update. Frozen at 20 digits.
TEST(Adam, FiveStepTraceMatchesOracle) {
  const double expected[5] = {
      0.9000000004999999975, 0.80041222869179214524, 0.70158627294602954516,
      0.6039390605737448393, 0.50796365926434067674,
  };
  auto w = T64::from_data({1}, {1.0}, true);
  nn::AdamState<double> state;
  state.lr = 0.1;
  state.beta1 = 0.9;
  state.beta2 = 0.999;
  state.epsilon = 1e-8;
  std::vector<T64> params = {w};
  for (int t = 0; t < 5; ++t) {
    w.zero_grad();
    w.grad()[0] = 2.0 * w.values()[0];
    adam_step(state, params);
    EXPECT_NEAR(w.values()[0], expected[t], 1e-10) << "step " << t + 1;
  }
}

TEST(Adam, FirstStepMovesByAlmostExactlyLr) {
  auto w = T64::from_data({1}, {1.0}, true);
  nn::AdamState<double> state;
  state.lr = 0.1;
  const double w1 = run_quadratic(state, w, 1);
  // -lr * mhat / (sqrt(vhat) + eps) with mhat = 2, sqrt(vhat) = 2
  EXPECT_NEAR(1.0 - w1, 0.1, 1e-8);
  EXPECT_GT(1.0 - w1, 0.1 - 1e-8);  // the epsilon correction only shrinks it
}

TEST(Adam, TwoHundredStepsConvergeOnQuadratic) {
  auto w = T64::from_data({1}, {1.0}, true);
  nn::AdamState<double> state;
  state.lr = 0.1;
  const double wf = run_quadratic(state, w, 200);
  EXPECT_LT(std::abs(wf), 0.02);
}

TEST(Adam, ShapeMismatchRejected) {
  auto w = T64::from_data({2}, {1.0, 2.0}, true);
  nn::AdamState<double> state;
  std::vector<T64> params = {w};
  w.zero_grad();
  adam_step(state, params);
  // accumulators are now sized for 2 entries; swapping in a larger tensor must fail
  auto w2 = T64::from_data({3}, {1.0, 2.0, 3.0}, true);
  w2.zero_grad();
  std::vector<T64> params2 = {w2};
  EXPECT_THROW(adam_step(state, params2), InvalidArgument);
}

TEST(Adam, InvalidHyperparamsRejected) {
  nn::AdamState<double> state;
  state.beta1 = 1.0;
  auto w = T64::from_data({1}, {1.0}, true);
  w.zero_grad();
  std::vector<T64> params = {w};
  EXPECT_THROW(adam_step(state, params), InvalidArgument);
}
