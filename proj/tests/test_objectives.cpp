/* Copyright 2026 The teedkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>

#include "teed/losses.hpp"
#include "test_util.hpp"

namespace teed {
namespace {

using testing::random_tensor;

Tensor<double> grid(int h, int w, std::vector<double> v) { return Tensor<double>({1, h, w}, std::move(v)); }

// Central-difference check of the analytic ∂loss/∂pred.
template <typename Fn>
double loss_grad_error(const Tensor<double>& pred, const Tensor<double>& gt, Fn fn) {
  Tensor<double> grad;
  fn(pred, gt, &grad);
  double worst = 0;
  Tensor<double> probe = pred;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    probe[i] = pred[i] + 1e-6;
    const double up = fn(probe, gt, nullptr);
    probe[i] = pred[i] - 1e-6;
    const double down = fn(probe, gt, nullptr);
    probe[i] = pred[i];
    worst = std::max(worst, testing::rel_error(grad[i], (up - down) / 2e-6, 1e-6));
  }
  return worst;
}

TEST(Wce, TwoByTwoOracle) {
  const LossConfig cfg;
  EXPECT_NEAR(wce_loss(grid(2, 2, {0.9, 0.1, 0.1, 0.1}), grid(2, 2, {1, 0, 0, 0}), cfg),
              0.17384485083541339703, 1e-12);
}

TEST(Wce, IgnoreBandOracleAndZeroGradient) {
  const LossConfig cfg;
  const auto pred = grid(2, 2, {0.9, 0.2, 0.6, 0.05});
  const auto gt = grid(2, 2, {1, 0, 0.2, 0});
  Tensor<double> grad;
  EXPECT_NEAR(wce_loss(pred, gt, cfg, &grad), 0.1778912215730513936, 1e-12);
  EXPECT_EQ(grad[2], 0.0);
  // Moving the ignored prediction changes nothing.
  auto moved = pred;
  moved[2] = 0.01;
  EXPECT_EQ(wce_loss(moved, gt, cfg), wce_loss(pred, gt, cfg));
}

TEST(Wce, EmptyPositiveSetGivesNearZero) {
  const LossConfig cfg;
  EXPECT_NEAR(wce_loss(Tensor<double>({1, 4, 4}, 1e-7), Tensor<double>({1, 4, 4}), cfg), 0.0, 1e-12);
}

TEST(Wce, NonNegativeOnRandomInputs) {
  const LossConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    auto pred = random_tensor({1, 6, 6}, rng, 0.001, 0.999);
    auto gt = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    EXPECT_GE(wce_loss(pred, gt, cfg), 0.0);
  }
}

TEST(Wce, ContractErrors) {
  const LossConfig cfg;
  EXPECT_THROW(wce_loss(Tensor<double>({1, 2, 2}, 0.5), Tensor<double>({1, 2, 3}), cfg), ContractError);
  EXPECT_THROW(wce_loss(Tensor<double>({1, 1, 2}, 0.5), grid(1, 2, {0, 1.5}), cfg), ContractError);
  LossConfig bad;
  bad.ignore_lo = 0.5;
  bad.ignore_hi = 0.4;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Tracing, FiveByFiveOracle) {
  LossConfig cfg;
  Tensor<double> gt({1, 5, 5}), pred({1, 5, 5});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) pred.at(0, y, x) = (1 + (7 * (5 * y + x)) % 11) / 13.0;
  gt.at(0, 1, 1) = 1;
  pred.at(0, 1, 1) = 0.8;
  const auto band = edge_band(gt, cfg);
  int count = 0;
  for (auto b : band) count += b;
  EXPECT_EQ(count, 16);
  EXPECT_NEAR(wce_loss(pred, gt, cfg), 0.95686113460977305765, 1e-12);
  EXPECT_NEAR(tracing_loss(pred, gt, cfg), 3.3350329097131694992, 1e-11);
  cfg.texture_weight = 0;
  EXPECT_NEAR(tracing_loss(pred, gt, cfg), 0.95686113460977305765 + 1.593933676093449493, 1e-11);
  cfg.texture_weight = 1;
  cfg.boundary_weight = 0;
  EXPECT_NEAR(tracing_loss(pred, gt, cfg), 0.95686113460977305765 + 0.78423809900994694852, 1e-11);
}

TEST(Tracing, PerfectPredictionHasNoExtraTerms) {
  LossConfig cfg;
  auto gt = grid(4, 4, {0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  Tensor<double> pred = gt;
  for (auto& v : pred.values()) v = v > 0 ? 1.0 - 1e-7 : 1e-7;
  EXPECT_NEAR(tracing_loss(pred, gt, cfg) - wce_loss(pred, gt, cfg), 0.0, 1e-5);
}

TEST(Tracing, TextureResponseIncreasesLoss) {
  LossConfig cfg;
  cfg.band_radius = 1;
  Tensor<double> gt({1, 8, 8});
  gt.at(0, 1, 1) = 1;
  Tensor<double> pred({1, 8, 8}, 0.05);
  const double base = tracing_loss(pred, gt, cfg);
  pred.at(0, 6, 6) = 0.5;
  EXPECT_GT(tracing_loss(pred, gt, cfg), base);
}

TEST(Tracing, TextureWeightIsMonotone) {
  Rng rng(7);
  auto pred = random_tensor({1, 8, 8}, rng, 0.01, 0.99);
  Tensor<double> gt({1, 8, 8});
  gt.at(0, 0, 0) = 1;
  LossConfig a, b;
  b.texture_weight = 2.0;
  EXPECT_GT(tracing_loss(pred, gt, b), tracing_loss(pred, gt, a));
}

TEST(LossGradients, MatchFiniteDifferences) {
  const LossConfig cfg;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(200 + seed);
    auto pred = random_tensor({1, 7, 7}, rng, 0.02, 0.98);
    Tensor<double> gt({1, 7, 7});
    for (auto& v : gt.values()) {
      const double u = rng.uniform();
      v = u < 0.15 ? 1.0 : (u < 0.25 ? 0.2 : 0.0);
    }
    gt[0] = 1.0;
    EXPECT_LT(loss_grad_error(pred, gt, [&](const auto& p, const auto& g, Tensor<double>* d) {
                return wce_loss(p, g, cfg, d);
              }),
              1e-4);
    EXPECT_LT(loss_grad_error(pred, gt, [&](const auto& p, const auto& g, Tensor<double>* d) {
                return tracing_loss(p, g, cfg, d);
              }),
              1e-4);
  }
}

TEST(DLoss, DecomposesIntoTerms) {
  const LossConfig cfg;
  Rng rng(5);
  Tensor<double> gt({1, 6, 6});
  gt.at(0, 2, 3) = 1;
  gt.at(0, 3, 3) = 1;
  std::array<Tensor<double>, 4> maps;
  for (auto& m : maps) m = random_tensor({1, 6, 6}, rng, 0.05, 0.95);
  const auto terms = dloss(maps, gt, cfg);
  const double expect = wce_loss(maps[0], gt, cfg) + wce_loss(maps[1], gt, cfg) + wce_loss(maps[2], gt, cfg) +
                        tracing_loss(maps[3], gt, cfg);
  EXPECT_NEAR(terms.total, expect, 1e-12);
  EXPECT_NEAR(terms.wce[1], wce_loss(maps[1], gt, cfg), 1e-14);
  EXPECT_NEAR(terms.tracing, tracing_loss(maps[3], gt, cfg), 1e-14);

  // Tape version: the fused map's gradient is the tracing gradient alone.
  std::array<Var<double>, 4> vars;
  for (int i = 0; i < 4; ++i) vars[i] = parameter(maps[i]);
  GradTape<double> tape;
  auto d = ops::dloss(tape, vars, gt, cfg);
  EXPECT_NEAR(d.total->value[0], expect, 1e-12);
  tape.backward(d.total);
  Tensor<double> tracing_grad, wce_grad;
  tracing_loss(maps[3], gt, cfg, &tracing_grad);
  wce_loss(maps[0], gt, cfg, &wce_grad);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    EXPECT_NEAR(vars[3]->grad[i], tracing_grad[i], 1e-12);
    EXPECT_NEAR(vars[0]->grad[i], wce_grad[i], 1e-12);
  }
}

TEST(DLoss, NearZeroWhenMapsMatch) {
  const LossConfig cfg;
  auto gt = grid(4, 4, {0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  std::array<Tensor<double>, 4> maps;
  for (auto& m : maps) {
    m = gt;
    for (auto& v : m.values()) v = v > 0 ? 1.0 - 1e-7 : 1e-7;
  }
  EXPECT_LT(dloss(maps, gt, cfg).total, 1e-4);
}

}  // namespace
}  // namespace teed
