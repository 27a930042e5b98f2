// Copyright 2026 The ccnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ccnn/ops.hpp"
#include "ccnn/tape.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

using namespace ccnn;
using ccnn::testing::check_tape_gradients;
using ccnn::testing::random_tensor;

namespace {

Tensor<double> distinct_values(Shape shape, std::mt19937_64& rng) {
  // A shuffled ramp keeps maxpool windows free of near-ties for finite differences.
  Tensor<double> t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(order[i]) - 0.3;
  return t;
}

Tensor<double> away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor<double> t = random_tensor(std::move(shape), rng);
  for (double& v : t.values()) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

}  // namespace

TEST(Conv2d, Conv1ShapeFromReferenceLayout) {
  Tensor<float> x({1, 64, 64});
  Tensor<float> w({64, 1, 3, 3}, 0.1f);
  EXPECT_EQ(conv2d(x, w, 1, Padding::Same).shape(), (Shape{64, 64, 64}));
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  std::mt19937_64 rng(1);
  Tensor<double> x({1, 3, 3});
  auto y = conv2d(x, random_tensor({2, 1, 3, 3}, rng), 1, Padding::Same);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, IdentityKernel) {
  Tensor<double> x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor<double> w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  EXPECT_EQ(conv2d(x, w, 1, Padding::Same), x);
}

TEST(Conv2d, MatchesDirectLoopsOnSpecCase) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 5, 5}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto got = conv2d(x, w, 1, Padding::Same);
  auto want = ccnn::testing::direct_conv(x, w, 1, true).output;
  ASSERT_EQ(got.shape(), want.shape());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Conv2d, MatchesDirectLoopsOnRandomShapes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t c = 1 + rng() % 4, h = 1 + rng() % 8, w = 1 + rng() % 8;
    const std::size_t o = 1 + rng() % 4, k = (rng() % 2) ? 3 : 1;
    const std::size_t stride = 1 + rng() % 2;
    const bool same = (rng() % 3) != 0 || k > std::min(h, w);
    auto x = random_tensor({c, h, w}, rng);
    auto kw = random_tensor({o, c, k, k}, rng);
    auto got = conv2d(x, kw, stride, same ? Padding::Same : Padding::Valid);
    auto want = ccnn::testing::direct_conv(x, kw, stride, same).output;
    ASSERT_EQ(got.shape(), want.shape()) << "trial " << trial;
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, BatchedEqualsPerSample) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({3, 2, 6, 6}, rng);
  auto w = random_tensor({4, 2, 3, 3}, rng);
  auto y = conv2d(x, w, 1, Padding::Same);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor<double> xs({2, 6, 6}, std::vector<double>(x.raw() + b * 72, x.raw() + (b + 1) * 72));
    auto ys = conv2d(xs, w, 1, Padding::Same);
    for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_EQ(ys[i], y[b * ys.size() + i]);
  }
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  Tensor<float> x({2, 4, 4});
  Tensor<float> w({1, 3, 3, 3});
  EXPECT_THROW(conv2d(x, w, 1, Padding::Same), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor<float>({1, 2, 3, 3}), 0, Padding::Same), ParameterError);
  EXPECT_THROW(conv2d(Tensor<float>({2, 2, 2}), Tensor<float>({1, 2, 3, 3}), 1, Padding::Valid),
               DimensionError);
}

TEST(Conv2dBackward, ZeroGradOut) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 4, 4}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto g = conv2d_backward(Tensor<double>({3, 4, 4}), x, w, 1, Padding::Same);
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.weights.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, PointwiseScalarKernelIsLinearMap) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({1, 3, 3}, rng);
  auto go = random_tensor({1, 3, 3}, rng);
  Tensor<double> w({1, 1, 1, 1}, 0.7);
  auto g = conv2d_backward(go, x, w, 1, Padding::Same);
  double expect = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) expect += go[i] * x[i];
  EXPECT_NEAR(g.weights[0], expect, 1e-12);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(g.input[i], 0.7 * go[i], 1e-12);
}

TEST(Conv2dBackward, MissingForwardStateIsUsageError) {
  EXPECT_THROW(conv2d_backward(Tensor<double>({1, 2, 2}), Tensor<double>{},
                               Tensor<double>({1, 1, 3, 3}), 1, Padding::Same),
               UsageError);
}

TEST(Conv2dBackward, FiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t stride = 1 + trial % 2;
    auto r = check_tape_gradients(
        {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)},
        [&](Tape<double>& t, const std::vector<Var>& v) {
          return ad::conv2d(t, v[0], v[1], stride, Padding::Same);
        });
    EXPECT_TRUE(r.ok) << r.worst;
  }
}

TEST(MaxPool, PicksWindowMax) {
  auto r = maxpool2x2(Tensor<float>({1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(r.output.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(r.output[0], 4.0f);
}

TEST(MaxPool, TiesRouteToFirstIndex) {
  Tensor<float> x({1, 4, 4}, 2.5f);
  auto r = maxpool2x2(x);
  for (float v : r.output.values()) EXPECT_EQ(v, 2.5f);
  auto g = maxpool2x2_backward(Tensor<float>(r.output.shape(), 1.0f), r.argmax, x.shape());
  // Each window's top-left element is its lowest linear index.
  EXPECT_EQ(g.at(0, 0, 0), 1.0f);
  EXPECT_EQ(g.at(0, 0, 1), 0.0f);
  EXPECT_EQ(g.at(0, 1, 0), 0.0f);
  EXPECT_EQ(g.at(0, 2, 2), 1.0f);
}

TEST(MaxPool, ReferenceLayoutShape) {
  EXPECT_EQ(maxpool2x2(Tensor<float>({64, 64, 64})).output.shape(), (Shape{64, 32, 32}));
}

TEST(MaxPool, OddSizeIsDimensionError) {
  EXPECT_THROW(maxpool2x2(Tensor<float>({1, 3, 4})), DimensionError);
}

TEST(MaxPool, GradientMassConservedPerChannel) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({2, 3, 6, 4}, rng);
  auto r = maxpool2x2(x);
  auto go = random_tensor(r.output.shape(), rng);
  auto g = maxpool2x2_backward(go, r.argmax, x.shape());
  for (std::size_t bc = 0; bc < 6; ++bc) {
    double in_sum = 0, out_sum = 0;
    for (std::size_t i = 0; i < 24; ++i) in_sum += g[bc * 24 + i];
    for (std::size_t i = 0; i < 6; ++i) out_sum += go[bc * 6 + i];
    EXPECT_NEAR(in_sum, out_sum, 1e-12);
  }
}

TEST(MaxPool, FiniteDifferences) {
  std::mt19937_64 rng(9);
  auto r = check_tape_gradients({distinct_values({2, 2, 4, 4}, rng)},
                                [](Tape<double>& t, const std::vector<Var>& v) {
                                  return ad::maxpool2x2(t, v[0]);
                                });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(BatchNorm, TrainOutputHasBetaMeanAndGammaVariance) {
  std::mt19937_64 rng(10);
  auto x = random_tensor({4, 3, 5, 5}, rng, -3.0, 5.0);
  Tensor<double> gamma({3}, {0.5, 2.0, 1.5}), beta({3}, {0.1, -1.0, 3.0});
  auto r = batchnorm_train(x, gamma, beta, nullptr, nullptr, 0.9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) sum += r.output[b * 75 + c * 25 + i];
    const double mean = sum / 100.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) {
        const double d = r.output[b * 75 + c * 25 + i] - mean;
        sq += d * d;
      }
    EXPECT_NEAR(mean, beta[c], 1e-5);
    EXPECT_NEAR(sq / 100.0, gamma[c] * gamma[c], 1e-5);
  }
}

TEST(BatchNorm, StandardizedInputPassesThrough) {
  // Per-channel values +1/-1 in equal measure: mean 0, variance 1.
  Tensor<double> x({2, 1, 2, 2}, {1, -1, 1, -1, -1, 1, -1, 1});
  auto r = batchnorm_train(x, Tensor<double>({1}, 1.0), Tensor<double>({1}, 0.0), nullptr,
                           nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.output[i], x[i], 1e-5);
}

TEST(BatchNorm, RunningStatisticsBlendWithMomentum) {
  Tensor<double> x({1, 1, 1, 4}, {1, 2, 3, 4});
  Tensor<double> mean({1}, 0.0), var({1}, 1.0);
  batchnorm_train(x, Tensor<double>({1}, 1.0), Tensor<double>({1}, 0.0), &mean, &var);
  EXPECT_NEAR(mean[0], 0.1 * 2.5, 1e-12);
  EXPECT_NEAR(var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);  // unbiased batch variance
}

TEST(BatchNorm, InferWithoutStatisticsIsUsageError) {
  Tensor<float> x({1, 2, 2});
  EXPECT_THROW(batchnorm_infer(x, Tensor<float>({1}, 1.f), Tensor<float>({1}), Tensor<float>{},
                               Tensor<float>{}),
               UsageError);
  EXPECT_THROW(batchnorm_train(x, Tensor<float>({2}, 1.f), Tensor<float>({1}), nullptr, nullptr),
               DimensionError);
}

TEST(BatchNorm, FiniteDifferencesTrainAndInfer) {
  std::mt19937_64 rng(11);
  auto gamma = random_tensor({3}, rng, 0.5, 1.5);
  auto beta = random_tensor({3}, rng);
  auto r = check_tape_gradients(
      {random_tensor({3, 3, 4, 4}, rng, -2.0, 2.0), gamma, beta},
      [](Tape<double>& t, const std::vector<Var>& v) {
        return ad::batchnorm_train<double>(t, v[0], v[1], v[2], nullptr, nullptr);
      });
  EXPECT_TRUE(r.ok) << r.worst;
  Tensor<double> mean({3}, {0.1, -0.2, 0.3}), var({3}, {0.5, 1.5, 2.0});
  auto ri = check_tape_gradients(
      {random_tensor({2, 3, 3, 3}, rng), gamma, beta},
      [&](Tape<double>& t, const std::vector<Var>& v) {
        return ad::batchnorm_infer<double>(t, v[0], v[1], v[2], mean, var);
      });
  EXPECT_TRUE(ri.ok) << ri.worst;
}

TEST(Relu, FiniteDifferences) {
  std::mt19937_64 rng(12);
  auto r = check_tape_gradients({away_from_zero({2, 3, 4}, rng)},
                                [](Tape<double>& t, const std::vector<Var>& v) {
                                  return ad::relu(t, v[0]);
                                });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(Softmax, UniformForEqualLogits) {
  std::vector<double> z(4, 0.0);
  for (double p : softmax<double>(z)) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 rng(13);
  auto z = random_tensor({6}, rng, -3, 3);
  auto p = softmax<double>(z.data());
  for (double c : {-100.0, 3.5, 1e3}) {
    auto zs = z;
    for (double& v : zs.values()) v += c;
    auto q = softmax<double>(zs.data());
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Softmax, NormalizedAndFiniteForLargeLogits) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = random_tensor({1 + rng() % 20}, rng, -1e4, 1e4);
    auto p = softmax<double>(z.data());
    double sum = 0;
    for (double v : p) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Softmax, EmptyIsDimensionError) {
  EXPECT_THROW(softmax<double>(std::span<const double>{}), DimensionError);
  EXPECT_THROW(cross_entropy<double>(std::vector<double>{0.5, 0.5}, 2), ParameterError);
}

TEST(SoftmaxCrossEntropy, GradientIsProbsMinusOneHot) {
  std::mt19937_64 rng(15);
  auto z = random_tensor({1, 5}, rng, -2, 2);
  std::vector<std::size_t> label{3};
  auto sce = softmax_cross_entropy(z, label);
  auto g = softmax_cross_entropy_backward(sce.probs, label);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(g[i], sce.probs[i] - (i == 3 ? 1.0 : 0.0), 1e-15);
  }
  EXPECT_NEAR(sce.loss, cross_entropy<double>(sce.probs.data(), 3), 1e-12);

  std::vector<std::size_t> labels{0, 4, 2};
  auto r = check_tape_gradients({random_tensor({3, 5}, rng, -2, 2)},
                                [&](Tape<double>& t, const std::vector<Var>& v) {
                                  return ad::softmax_cross_entropy(t, v[0], labels);
                                });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(SoftmaxCrossEntropy, SaturatedLogitsStayFinite) {
  Tensor<double> z({1, 3}, {1e4, -1e4, 0});
  std::vector<std::size_t> label{1};
  auto r = softmax_cross_entropy(z, label);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 2e4, 1e-6);
}

TEST(Dropout, RateZeroAndInferAreIdentity) {
  std::mt19937_64 rng(16);
  auto x = random_tensor({100}, rng);
  EXPECT_EQ(dropout(x, 0.0, Mode::Train, rng).output, x);
  EXPECT_EQ(dropout(x, 0.0, Mode::Infer, rng).output, x);
  EXPECT_EQ(dropout(x, 0.5, Mode::Infer, rng).output, x);
}

TEST(Dropout, SurvivorFractionAndMean) {
  std::mt19937_64 rng(17);
  Tensor<double> x({10000}, 1.0);
  auto r = dropout(x, 0.5, Mode::Train, rng);
  std::size_t survivors = 0;
  double sum = 0;
  for (double v : r.output.values()) {
    survivors += v != 0.0;
    sum += v;
  }
  EXPECT_NEAR(static_cast<double>(survivors) / 10000.0, 0.5, 0.03);
  EXPECT_NEAR(sum / 10000.0, 1.0, 0.05);
}

TEST(Dropout, RateOutOfRangeIsParameterError) {
  std::mt19937_64 rng(18);
  EXPECT_THROW(dropout(Tensor<float>({4}), 1.0, Mode::Train, rng), ParameterError);
  EXPECT_THROW(dropout(Tensor<float>({4}), -0.1, Mode::Train, rng), ParameterError);
}

TEST(Dropout, FixedMaskFiniteDifferences) {
  std::mt19937_64 rng(19);
  auto r = check_tape_gradients({random_tensor({4, 6}, rng)},
                                [](Tape<double>& t, const std::vector<Var>& v) {
                                  std::mt19937_64 mask_rng(123);
                                  return ad::dropout(t, v[0], 0.3, Mode::Train, mask_rng);
                                });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(Determinism, SameSeedSameBits) {
  auto run = [] {
    std::mt19937_64 rng(20);
    auto x = random_tensor({2, 3, 8, 8}, rng);
    auto w = random_tensor({4, 3, 3, 3}, rng);
    auto y = conv2d(x.cast<float>(), w.cast<float>(), 1, Padding::Same);
    return dropout(relu(y), 0.4, Mode::Train, rng).output;
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({3}, 1.0), true);
  EXPECT_THROW(t.backward(x), UsageError);
  Var c = t.leaf(Tensor<double>({1}, 1.0), false);
  EXPECT_THROW(t.backward(c), UsageError);
}

TEST(Tape, GradientsAccumulateOverFanOut) {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({1}, 3.0), true);
  Var y = ad::add(t, x, x);
  t.backward(y);
  EXPECT_EQ(t.grad(x)[0], 2.0);
}
