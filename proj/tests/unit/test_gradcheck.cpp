#include <gtest/gtest.h>

#include "cubic/gradcheck.hpp"
#include "cubic/ops.hpp"
#include "helpers.hpp"

using namespace cubic;
using cubic::testing::random_tensor;

TEST(GradientError, RelativeWithFloor) {
  EXPECT_DOUBLE_EQ(gradient_error(2.0, 1.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(gradient_error(1e-4, 0.0, 1.0), 1e-4);
  EXPECT_DOUBLE_EQ(gradient_error(1e-4, 0.0, 1e-6), 1.0);
  EXPECT_DOUBLE_EQ(gradient_error(0.0, 0.0, 1.0), 0.0);
}

TEST(GradCheck, EveryLayerPassesOnSeveralSeeds) {
  for (uint64_t seed = 100; seed < 105; ++seed) {
    for (const GradCheckReport& r : gradcheck_all_layers(seed, kLayerCheck)) {
      EXPECT_TRUE(r.passed()) << r.name << " seed " << seed << " max " << r.max_error << " " << r.worst;
      EXPECT_GT(r.checked, 0);
    }
  }
}

TEST(GradCheck, TinyNetworkPasses) {
  const GradCheckReport r = gradcheck_puzzle_network(BackboneConfig::make(BackboneVariant::kTiny), 64, 48,
                                                     {3, 4, 20, 20}, 4, 60, 77, kNetworkCheck);
  EXPECT_EQ(r.checked, 60);
  EXPECT_TRUE(r.passed()) << r.max_error << " " << r.worst;
}

TEST(GradCheck, DetectsAWrongGradient) {
  // Sensitivity control: a linear layer whose analytic weight gradient is
  // perturbed by 5% must be flagged.
  Rng rng(9);
  const Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor r = random_tensor({3, 2}, rng);
  auto objective = [&] {
    const Tensor y = linear_forward(x, w, b);
    double s = 0;
    for (size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
    return s;
  };
  const LinearGrads g = linear_backward(r, x, w);
  const GradCheckReport ok = check_gradients("linear", {{"w", &w, &g.weights, {}}}, objective, kLayerCheck);
  EXPECT_TRUE(ok.passed()) << ok.worst;
  Tensor wrong = g.weights;
  wrong[3] *= 1.05f;
  wrong[3] += 0.05f;
  const GradCheckReport bad = check_gradients("linear", {{"w", &w, &wrong, {}}}, objective, kLayerCheck);
  EXPECT_FALSE(bad.passed());
  EXPECT_EQ(bad.failed, 1);
  Tensor swapped = g.weights;
  std::swap(swapped[0], swapped[1]);
  EXPECT_FALSE(check_gradients("linear", {{"w", &w, &swapped, {}}}, objective, kLayerCheck).passed());
}

TEST(GradCheck, SuiteCoversLayersAndNetworkPerSeed) {
  const std::vector<GradCheckReport> reports = gradcheck_suite(1, 1, 50);
  ASSERT_EQ(reports.size(), 9u);
  EXPECT_EQ(reports.back().checked, 50);
  for (const GradCheckReport& r : reports) EXPECT_TRUE(r.passed()) << r.name << " " << r.worst;
}
