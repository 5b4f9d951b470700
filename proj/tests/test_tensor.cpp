// Gradient correctness for every op: analytic reverse-mode vs central finite
// differences in double precision, h = 1e-4, on random probe slices.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

using namespace pagan;
using nn::Tensor;

namespace {

using T64 = Tensor<double>;

T64 random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0, double offset = 0.0,
                  bool requires_grad = true) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = dist(rng) * scale + offset;
  return T64::from_data(std::move(shape), std::move(v), requires_grad);
}

// Central-difference check of d(loss)/d(param) on `probes` random entries.
// `make_loss` must rebuild the graph from the current parameter values.
void grad_check(std::vector<T64> params, const std::function<T64()>& make_loss, int probes = 5,
                double tol = 1e-4, double h = 1e-4) {
  auto loss = make_loss();
  for (auto& p : params) p.zero_grad();
  nn::backward(loss);

  Rng rng = make_rng(4242);
  for (auto& p : params) {
    const auto analytic = p.grad();
    std::uniform_int_distribution<size_t> pick(0, p.values().size() - 1);
    for (int k = 0; k < probes; ++k) {
      const size_t i = pick(rng);
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double up = make_loss().item();
      p.values()[i] = keep - h;
      const double dn = make_loss().item();
      p.values()[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::abs(analytic[i] - fd) / std::max({1e-3, std::abs(analytic[i]),
                                                                std::abs(fd)});
      EXPECT_LT(err, tol) << "entry " << i << ": analytic " << analytic[i] << " vs fd " << fd;
    }
  }
}

}  // namespace

TEST(Autodiff, LinearCaseGradOfWeightIsInput) {
  Rng rng = make_rng(1);
  auto w = random_tensor({1, 1, 2, 3}, rng);
  auto x = random_tensor({1, 1, 2, 3}, rng, 1.0, 0.0, false);
  auto loss = nn::mul_scalar(nn::mean_all(nn::mul(w, x)), 6.0);  // sum(w * x)
  nn::backward(loss);
  for (size_t i = 0; i < x.values().size(); ++i)
    EXPECT_NEAR(w.grad()[i], x.values()[i], 1e-12);
}

TEST(Autodiff, BackwardTwiceAccumulatesExactly) {
  Rng rng = make_rng(2);
  auto w = random_tensor({1, 1, 2, 2}, rng);
  auto loss = nn::mean_all(nn::mul(w, w));
  nn::backward(loss);
  const auto once = w.grad();
  nn::backward(loss);
  for (size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Autodiff, NonScalarLossRejected) {
  Rng rng = make_rng(3);
  auto w = random_tensor({1, 1, 2, 2}, rng);
  EXPECT_THROW(nn::backward(nn::mul(w, w)), InvalidArgument);
}

TEST(Autodiff, UnreachableParameterKeepsZeroGrad) {
  Rng rng = make_rng(4);
  auto w = random_tensor({1, 1, 2, 2}, rng);
  auto orphan = random_tensor({1, 1, 2, 2}, rng);
  orphan.zero_grad();
  auto loss = nn::mean_all(nn::mul(w, w));
  nn::backward(loss);
  for (double gv : orphan.grad()) EXPECT_EQ(gv, 0.0);
}

TEST(Autodiff, IdentityOneByOneConv) {
  Rng rng = make_rng(5);
  auto x = random_tensor({2, 3, 4, 4}, rng, 1.0, 0.0, false);
  // 3->3 identity 1x1 kernel
  std::vector<double> wv(9, 0.0);
  wv[0 * 3 + 0] = 1.0;
  wv[1 * 3 + 1] = 1.0;
  wv[2 * 3 + 2] = 1.0;
  auto w = T64::from_data({3, 3, 1, 1}, wv);
  auto b = T64::zeros({3});
  auto y = nn::conv2d(x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (size_t i = 0; i < x.values().size(); ++i) EXPECT_DOUBLE_EQ(y.values()[i], x.values()[i]);
}

TEST(GradCheck, Conv2dStride1) {
  Rng rng = make_rng(10);
  auto x = random_tensor({2, 3, 6, 6}, rng);
  auto w = random_tensor({4, 3, 3, 3}, rng, 0.5);
  auto b = random_tensor({4}, rng, 0.1);
  auto c = random_tensor({2, 4, 6, 6}, rng, 1.0, 0.0, false);
  auto make = [&] { return nn::mean_all(nn::mul(nn::conv2d(x, w, b, 1, 1), c)); };
  grad_check({x, w, b}, make);
}

TEST(GradCheck, Conv2dStride2Kernel4) {
  Rng rng = make_rng(11);
  auto x = random_tensor({2, 2, 8, 8}, rng);
  auto w = random_tensor({3, 2, 4, 4}, rng, 0.5);
  auto b = random_tensor({3}, rng, 0.1);
  auto c = random_tensor({2, 3, 4, 4}, rng, 1.0, 0.0, false);
  auto make = [&] { return nn::mean_all(nn::mul(nn::conv2d(x, w, b, 2, 1), c)); };
  grad_check({x, w, b}, make);
}

TEST(GradCheck, ConvTransposeStride2) {
  Rng rng = make_rng(12);
  auto x = random_tensor({2, 3, 4, 4}, rng);
  auto w = random_tensor({3, 2, 4, 4}, rng, 0.5);  // (C, F, k, k)
  auto b = random_tensor({2}, rng, 0.1);
  auto c = random_tensor({2, 2, 8, 8}, rng, 1.0, 0.0, false);
  auto make = [&] { return nn::mean_all(nn::mul(nn::conv2d_transpose(x, w, b, 2, 1), c)); };
  grad_check({x, w, b}, make);
}

TEST(GradCheck, ConvTransposeShape) {
  Rng rng = make_rng(13);
  auto x = random_tensor({1, 2, 5, 5}, rng);
  auto w = random_tensor({2, 3, 4, 4}, rng);
  auto b = T64::zeros({3});
  auto y = nn::conv2d_transpose(x, w, b, 2, 1);
  EXPECT_EQ(y.shape(), (std::vector<int>{1, 3, 10, 10}));
}

TEST(GradCheck, ReluFamily) {
  Rng rng = make_rng(14);
  // keep probes away from the kink at zero
  auto x = random_tensor({2, 2, 4, 4}, rng, 1.0, 0.0);
  for (auto& v : x.values())
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
  auto c = random_tensor({2, 2, 4, 4}, rng, 1.0, 0.0, false);
  grad_check({x}, [&] { return nn::mean_all(nn::mul(nn::relu(x), c)); });
  grad_check({x}, [&] { return nn::mean_all(nn::mul(nn::leaky_relu(x, 0.2), c)); });
}

TEST(GradCheck, TanhSigmoid) {
  Rng rng = make_rng(15);
  auto x = random_tensor({1, 2, 4, 4}, rng);
  auto c = random_tensor({1, 2, 4, 4}, rng, 1.0, 0.0, false);
  grad_check({x}, [&] { return nn::mean_all(nn::mul(nn::tanh_act(x), c)); });
  grad_check({x}, [&] { return nn::mean_all(nn::mul(nn::sigmoid_act(x), c)); });
}

TEST(GradCheck, BatchNormTraining) {
  Rng rng = make_rng(16);
  auto x = random_tensor({3, 2, 4, 4}, rng, 1.5, 0.3);
  auto gamma = random_tensor({2}, rng, 0.2, 1.0);
  auto beta = random_tensor({2}, rng, 0.2);
  auto c = random_tensor({3, 2, 4, 4}, rng, 1.0, 0.0, false);
  auto make = [&] {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);  // fresh buffers: no cross-call coupling
    return nn::mean_all(nn::mul(nn::batch_norm(x, gamma, beta, &rm, &rv, true), c));
  };
  grad_check({x, gamma, beta}, make);
}

TEST(GradCheck, BatchNormInference) {
  Rng rng = make_rng(17);
  auto x = random_tensor({2, 2, 4, 4}, rng);
  auto gamma = random_tensor({2}, rng, 0.2, 1.0);
  auto beta = random_tensor({2}, rng, 0.2);
  auto c = random_tensor({2, 2, 4, 4}, rng, 1.0, 0.0, false);
  std::vector<double> rm = {0.1, -0.2}, rv = {0.9, 1.4};
  auto make = [&] {
    std::vector<double> rm_copy = rm, rv_copy = rv;
    return nn::mean_all(nn::mul(nn::batch_norm(x, gamma, beta, &rm_copy, &rv_copy, false), c));
  };
  grad_check({x, gamma, beta}, make);
}

TEST(GradCheck, DropoutFixedMask) {
  Rng base = make_rng(18);
  auto x = random_tensor({2, 2, 4, 4}, base);
  auto c = random_tensor({2, 2, 4, 4}, base, 1.0, 0.0, false);
  auto make = [&] {
    Rng rng = make_rng(777);  // same mask every evaluation
    return nn::mean_all(nn::mul(nn::dropout(x, 0.4, true, rng), c));
  };
  grad_check({x}, make);
}

TEST(Dropout, InferenceIsIdentity) {
  Rng rng = make_rng(19);
  auto x = random_tensor({2, 2, 4, 4}, rng);
  Rng drng = make_rng(1);
  auto y = nn::dropout(x, 0.5, false, drng);
  for (size_t i = 0; i < x.values().size(); ++i)
    EXPECT_DOUBLE_EQ(y.values()[i], x.values()[i]);
}

TEST(GradCheck, ConcatAndAdd) {
  Rng rng = make_rng(20);
  auto a = random_tensor({2, 2, 3, 3}, rng);
  auto b = random_tensor({2, 3, 3, 3}, rng);
  auto c = random_tensor({2, 5, 3, 3}, rng, 1.0, 0.0, false);
  grad_check({a, b}, [&] { return nn::mean_all(nn::mul(nn::concat_channels(a, b), c)); });

  auto d = random_tensor({2, 2, 3, 3}, rng);
  auto e = random_tensor({2, 2, 3, 3}, rng, 1.0, 0.0, false);
  grad_check({a, d}, [&] { return nn::mean_all(nn::mul(nn::add(a, d), e)); });
}

TEST(GradCheck, MaxPoolAndUpsample) {
  Rng rng = make_rng(21);
  auto x = random_tensor({2, 2, 6, 6}, rng);
  auto c = random_tensor({2, 2, 3, 3}, rng, 1.0, 0.0, false);
  grad_check({x}, [&] { return nn::mean_all(nn::mul(nn::max_pool2d(x, 2, 2), c)); });

  auto c2 = random_tensor({2, 2, 12, 12}, rng, 1.0, 0.0, false);
  grad_check({x}, [&] { return nn::mean_all(nn::mul(nn::upsample_nearest(x, 2), c2)); });
}

TEST(GradCheck, Losses) {
  Rng rng = make_rng(22);
  auto a = random_tensor({2, 1, 4, 4}, rng);
  auto b = random_tensor({2, 1, 4, 4}, rng, 1.0, 3.0, false);  // keep |a-b| away from 0
  grad_check({a}, [&] { return nn::l1_mean(a, b); });
  grad_check({a}, [&] { return nn::bce_with_logits_mean(a, 1.0); });
  grad_check({a}, [&] { return nn::bce_with_logits_mean(a, 0.0); });
  grad_check({a}, [&] { return nn::mean_all(a); });
}

TEST(Ops, MaxPoolTakesMaximum) {
  auto x = T64::from_data({1, 1, 2, 2}, {1.0, 4.0, -9.0, 2.0});
  auto y = nn::max_pool2d(x, 2, 2);
  EXPECT_DOUBLE_EQ(y.values()[0], 4.0);
}

TEST(Ops, UpsampleRepeats) {
  auto x = T64::from_data({1, 1, 1, 2}, {3.0, 5.0});
  auto y = nn::upsample_nearest(x, 2);
  EXPECT_EQ(y.shape(), (std::vector<int>{1, 1, 2, 4}));
  EXPECT_DOUBLE_EQ(y.values()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.values()[1], 3.0);
  EXPECT_DOUBLE_EQ(y.values()[2], 5.0);
  EXPECT_DOUBLE_EQ(y.values()[3], 5.0);
}

TEST(Ops, BceAtZeroLogitsIsLn2) {
  auto x = T64::zeros({1, 1, 2, 2});
  EXPECT_NEAR(nn::bce_with_logits_mean(x, 1.0).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(nn::bce_with_logits_mean(x, 0.0).item(), std::log(2.0), 1e-12);
}

TEST(Ops, DetachCutsGraph) {
  Rng rng = make_rng(23);
  auto w = random_tensor({1, 1, 2, 2}, rng);
  auto loss = nn::mean_all(nn::mul(nn::detach(w), w));
  w.zero_grad();
  nn::backward(loss);
  // only the direct (non-detached) path contributes: d/dw mean(c * w) = c/n
  for (size_t i = 0; i < w.values().size(); ++i)
    EXPECT_NEAR(w.grad()[i], w.values()[i] / 4.0, 1e-12);
}

TEST(Ops, ShapeErrorsNameTheProblem) {
  Rng rng = make_rng(24);
  auto a = random_tensor({1, 2, 4, 4}, rng);
  auto w = random_tensor({3, 5, 3, 3}, rng);  // expects 5 channels
  auto b = T64::zeros({3});
  try {
    nn::conv2d(a, w, b, 1, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}
