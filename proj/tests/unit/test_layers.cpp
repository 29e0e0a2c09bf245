#include <cmath>

#include <gtest/gtest.h>

#include "cubic/errors.hpp"
#include "cubic/ops.hpp"
#include "helpers.hpp"

using namespace cubic;
using cubic::testing::random_tensor;

namespace {

// Direct seven-loop convolution in double precision.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& s) {
  const Dims3 in{x.dim(2), x.dim(3), x.dim(4)};
  const Dims3 out = s.output_extent(in);
  Tensor y({x.dim(0), s.out_channels, out[0], out[1], out[2]});
  for (int64_t n = 0; n < x.dim(0); ++n)
    for (int64_t oc = 0; oc < s.out_channels; ++oc)
      for (int64_t ot = 0; ot < out[0]; ++ot)
        for (int64_t oh = 0; oh < out[1]; ++oh)
          for (int64_t ow = 0; ow < out[2]; ++ow) {
            double acc = b.empty() ? 0.0 : b[static_cast<size_t>(oc)];
            for (int64_t ic = 0; ic < s.in_channels; ++ic)
              for (int64_t kt = 0; kt < s.kernel[0]; ++kt)
                for (int64_t kh = 0; kh < s.kernel[1]; ++kh)
                  for (int64_t kw = 0; kw < s.kernel[2]; ++kw) {
                    const int64_t t = ot * s.stride[0] - s.padding[0] + kt;
                    const int64_t h = oh * s.stride[1] - s.padding[1] + kh;
                    const int64_t v = ow * s.stride[2] - s.padding[2] + kw;
                    if (t < 0 || h < 0 || v < 0 || t >= in[0] || h >= in[1] || v >= in[2]) continue;
                    acc += static_cast<double>(x.at({n, ic, t, h, v})) * w.at({oc, ic, kt, kh, kw});
                  }
            y.at({n, oc, ot, oh, ow}) = static_cast<float>(acc);
          }
  return y;
}

ConvSpec random_spec(Rng& rng) {
  ConvSpec s;
  s.in_channels = rng.uniform_int(1, 3);
  s.out_channels = rng.uniform_int(1, 4);
  for (int i = 0; i < 3; ++i) {
    s.kernel[i] = 2 * rng.uniform_int(0, 1) + 1;
    s.stride[i] = rng.uniform_int(1, 2);
    s.padding[i] = rng.uniform_int(0, s.kernel[i] / 2);
  }
  return s;
}

}  // namespace

TEST(Conv3d, MatchesDirectConvolutionOracle) {
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    const ConvSpec s = random_spec(rng);
    const Tensor x = random_tensor({rng.uniform_int(1, 3), s.in_channels, rng.uniform_int(3, 6),
                                    rng.uniform_int(3, 7), rng.uniform_int(3, 7)},
                                   rng);
    const Tensor w = random_tensor(s.weight_shape(), rng);
    const Tensor b = seed % 2 ? random_tensor({s.out_channels}, rng) : Tensor();
    const Tensor got = conv3d_forward(x, w, b, s);
    const Tensor want = naive_conv(x, w, b, s);
    ASSERT_EQ(got.shape(), want.shape()) << "seed " << seed;
    for (size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-5) << "seed " << seed;
  }
}

TEST(Conv3d, BackwardBiasIsChannelSumAndShapesMatch) {
  Rng rng(7);
  ConvSpec s;
  s.in_channels = 2;
  s.out_channels = 3;
  s.kernel = {3, 3, 3};
  s.padding = {1, 1, 1};
  const Tensor x = random_tensor({2, 2, 4, 5, 5}, rng);
  const Tensor w = random_tensor(s.weight_shape(), rng);
  const Tensor y = conv3d_forward(x, w, Tensor(), s);
  const Tensor g = random_tensor(y.shape(), rng);
  const ConvGrads grads = conv3d_backward(g, x, w, s);
  EXPECT_EQ(grads.input.shape(), x.shape());
  EXPECT_EQ(grads.weights.shape(), w.shape());
  for (int64_t oc = 0; oc < 3; ++oc) {
    double total = 0;
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t i = 0; i < 4 * 5 * 5; ++i) total += g[static_cast<size_t>((n * 3 + oc) * 100 + i)];
    EXPECT_NEAR(grads.bias[static_cast<size_t>(oc)], total, 1e-4);
  }
  EXPECT_TRUE(conv3d_backward(g, x, w, s, false).input.empty());
}

TEST(Conv3d, BackwardIsAdjointOfForward) {
  // <conv(x), g> is linear in x, so <grad_x, x> must equal it (no bias).
  Rng rng(3);
  ConvSpec s;
  s.in_channels = 3;
  s.out_channels = 2;
  s.kernel = {3, 1, 3};
  s.stride = {1, 2, 2};
  s.padding = {1, 0, 1};
  const Tensor x = random_tensor({2, 3, 4, 6, 6}, rng);
  const Tensor w = random_tensor(s.weight_shape(), rng);
  const Tensor y = conv3d_forward(x, w, Tensor(), s);
  const Tensor g = random_tensor(y.shape(), rng);
  const ConvGrads grads = conv3d_backward(g, x, w, s);
  double lhs = 0, rhs = 0, rhs_w = 0;
  for (size_t i = 0; i < y.size(); ++i) lhs += static_cast<double>(y[i]) * g[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(grads.input[i]) * x[i];
  for (size_t i = 0; i < w.size(); ++i) rhs_w += static_cast<double>(grads.weights[i]) * w[i];
  EXPECT_NEAR(lhs, rhs, 1e-3 * std::abs(lhs) + 1e-3);
  EXPECT_NEAR(lhs, rhs_w, 1e-3 * std::abs(lhs) + 1e-3);
}

TEST(Conv3d, RejectsMismatchedShapes) {
  ConvSpec s;
  s.in_channels = 2;
  s.kernel = {3, 3, 3};
  EXPECT_THROW(conv3d_forward(Tensor({1, 3, 4, 4, 4}), Tensor(s.weight_shape()), Tensor(), s), ShapeError);
  EXPECT_THROW(conv3d_forward(Tensor({1, 2, 2, 4, 4}), Tensor(s.weight_shape()), Tensor(), s), ShapeError);
  EXPECT_THROW(conv3d_forward(Tensor({1, 2, 4, 4, 4}), Tensor({1, 2, 1, 1, 1}), Tensor(), s), ShapeError);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  Rng rng(11);
  const Tensor x = random_tensor({4, 3, 2, 3, 3}, rng, 3.0);
  const Tensor gamma({3}, 1.0f), beta({3}, 0.0f);
  const BatchNormResult r = batchnorm3d_forward(x, gamma, beta, RunningStats::initial(3), NormMode::kTrain);
  const int64_t per = 2 * 3 * 3;
  for (int64_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0, xs = 0, xss = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < per; ++i) {
        const size_t k = static_cast<size_t>((n * 3 + c) * per + i);
        s += r.output[k];
        ss += static_cast<double>(r.output[k]) * r.output[k];
        xs += x[k];
        xss += static_cast<double>(x[k]) * x[k];
      }
    const double m = 4.0 * per;
    EXPECT_NEAR(s / m, 0.0, 1e-5);
    EXPECT_NEAR(ss / m, 1.0, 1e-3);
    // Running stats: 0.9 * initial + 0.1 * batch (unbiased variance).
    const double mean = xs / m, var = (xss - m * mean * mean) / (m - 1);
    EXPECT_NEAR(r.stats.mean[static_cast<size_t>(c)], 0.1 * mean, 1e-5);
    EXPECT_NEAR(r.stats.var[static_cast<size_t>(c)], 0.9 + 0.1 * var, 1e-4);
  }
  EXPECT_EQ(r.stats.updates, 1);
}

TEST(BatchNorm, EvalBeforeAnyUpdateIsAnError) {
  const Tensor x({1, 2, 1, 1, 1}, 1.0f);
  EXPECT_THROW(
      batchnorm3d_forward(x, Tensor({2}, 1.0f), Tensor({2}, 0.0f), RunningStats::initial(2), NormMode::kEval),
      std::logic_error);
}

TEST(BatchNorm, EvalModeUsesRunningStatsAndKeepsThem) {
  RunningStats st = RunningStats::initial(1);
  st.mean[0] = 2.0f;
  st.var[0] = 4.0f;
  st.updates = 5;
  const Tensor x({1, 1, 1, 1, 2}, std::vector<float>{2.0f, 6.0f});
  const BatchNormResult r =
      batchnorm3d_forward(x, Tensor({1}, 3.0f), Tensor({1}, 1.0f), st, NormMode::kEval);
  EXPECT_NEAR(r.output[0], 1.0, 1e-6);
  EXPECT_NEAR(r.output[1], 3.0f * 4.0f / std::sqrt(4.0f + kBatchNormEpsilon) + 1.0f, 1e-5);
  EXPECT_TRUE(r.stats.mean.bit_equal(st.mean));
  EXPECT_EQ(r.stats.updates, 5);
}

TEST(Relu, ForwardAndBackward) {
  const Tensor x({4}, std::vector<float>{-1, 0, 2, -0.5f});
  const Tensor y = relu_forward(x);
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[2], 2.0f);
  const Tensor g = relu_backward(Tensor({4}, 1.0f), x);
  EXPECT_EQ(g[0], 0.0f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_EQ(g[2], 1.0f);
}

TEST(MaxPool, TiesGoToFirstIndex) {
  const Tensor x({1, 1, 2, 2, 2}, 3.0f);
  PoolSpec p;
  p.window = {2, 2, 2};
  p.stride = {2, 2, 2};
  const MaxPoolResult r = maxpool3d_forward(x, p);
  ASSERT_EQ(r.argmax.size(), 1u);
  EXPECT_EQ(r.argmax[0], 0);
  const Tensor g = maxpool3d_backward(Tensor({1, 1, 1, 1, 1}, 5.0f), r.argmax, x.shape());
  EXPECT_EQ(g[0], 5.0f);
  EXPECT_DOUBLE_EQ(sum(g), 5.0);
}

TEST(MaxPool, PicksMaximumWithPadding) {
  Tensor x({1, 1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 9, 6, 7, 8, 5});
  PoolSpec p;
  p.window = {1, 3, 3};
  p.stride = {1, 2, 2};
  p.padding = {0, 1, 1};
  const MaxPoolResult r = maxpool3d_forward(x, p);
  EXPECT_EQ(r.output.shape(), (Shape{1, 1, 1, 2, 2}));
  for (float v : r.output.data()) EXPECT_EQ(v, 9.0f);
}

TEST(GlobalAvgPool, MeanAndUniformGradient) {
  const Tensor x({1, 2, 1, 1, 2}, std::vector<float>{1, 3, 5, 9});
  const Tensor y = global_avgpool_forward(x);
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_EQ(y[0], 2.0f);
  EXPECT_EQ(y[1], 7.0f);
  const Tensor g = global_avgpool_backward(Tensor({1, 2}, std::vector<float>{2, 4}), x.shape());
  EXPECT_EQ(g[0], 1.0f);
  EXPECT_EQ(g[3], 2.0f);
}

TEST(Linear, ForwardAndBackwardByHand) {
  const Tensor x({1, 2}, std::vector<float>{1, 2});
  const Tensor w({2, 3}, std::vector<float>{1, 0, -1, 2, 1, 0});
  const Tensor b({3}, std::vector<float>{0.5f, 0, 0});
  const Tensor y = linear_forward(x, w, b);
  EXPECT_EQ(y[0], 5.5f);
  EXPECT_EQ(y[1], 2.0f);
  EXPECT_EQ(y[2], -1.0f);
  const LinearGrads g = linear_backward(Tensor({1, 3}, std::vector<float>{1, 0, 1}), x, w);
  EXPECT_EQ(g.input[0], 0.0f);
  EXPECT_EQ(g.input[1], 2.0f);
  EXPECT_EQ(g.weights.at({1, 2}), 2.0f);
  EXPECT_EQ(g.bias[1], 0.0f);
  EXPECT_THROW(linear_forward(Tensor({1, 3}), w, b), ShapeError);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
  const Tensor logits({2, 48}, 0.25f);
  const int labels[] = {0, 47};
  EXPECT_NEAR(softmax_cross_entropy(logits, labels).loss, std::log(48.0), 1e-6);
}

TEST(SoftmaxCrossEntropy, InvariantToRowShiftAndGradientIsSoftmaxMinusOneHot) {
  Rng rng(5);
  const Tensor logits = random_tensor({3, 5}, rng, 2.0);
  Tensor shifted = logits;
  for (int64_t n = 0; n < 3; ++n)
    for (int64_t k = 0; k < 5; ++k) shifted.at({n, k}) += 10.0f * static_cast<float>(n + 1);
  const int labels[] = {1, 4, 0};
  const LossResult a = softmax_cross_entropy(logits, labels);
  const LossResult b = softmax_cross_entropy(shifted, labels);
  EXPECT_NEAR(a.loss, b.loss, 1e-5);
  const Tensor p = softmax(logits);
  for (int64_t n = 0; n < 3; ++n) {
    double row = 0;
    for (int64_t k = 0; k < 5; ++k) {
      row += p.at({n, k});
      const double want = (p.at({n, k}) - (k == labels[n] ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(a.grad_logits.at({n, k}), want, 1e-6);
    }
    EXPECT_NEAR(row, 1.0, 1e-6);
  }
}

TEST(SoftmaxCrossEntropy, RejectsBadLabels) {
  const Tensor logits({1, 3});
  const int bad[] = {3};
  EXPECT_THROW(softmax_cross_entropy(logits, bad), std::out_of_range);
  const int two[] = {0, 1};
  EXPECT_THROW(softmax_cross_entropy(logits, two), ShapeError);
}

TEST(ArgmaxRows, LowestIndexWinsTies) {
  const Tensor s({2, 3}, std::vector<float>{1, 3, 3, 2, 2, 2});
  const std::vector<int> a = argmax_rows(s);
  EXPECT_EQ(a[0], 1);
  EXPECT_EQ(a[1], 0);
}
