// Copyright 2026 The DFF Authors
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

#include "dff/backbone.hpp"
#include "dff/datagen.hpp"
#include "dff/error.hpp"
#include "dff/oracle.hpp"
#include "dff/training.hpp"
#include "support/fixtures.hpp"

namespace {

using testing_support::random_vector;

TEST(Losses, HandValues) {
  const std::vector<double> a{1, 2, 3}, b{1, 0, 7};
  EXPECT_DOUBLE_EQ(dff::mse_loss(a, b), 20.0 / 3.0);
  EXPECT_DOUBLE_EQ(dff::rmse(a, b), std::sqrt(20.0 / 3.0));
  const std::vector<dff::CostVector> p{{1, 2}, {3, 4}}, t{{1, 0}, {3, 0}};
  EXPECT_DOUBLE_EQ(dff::batch_mse(p, t), 20.0 / 4.0);
  EXPECT_THROW(dff::mse_loss(a, std::vector<double>{1}), dff::DataError);
}

// SPO+ straight from its definition, using brute-force solves. For an oracle
// of sense s, min_w (s u)^T w = s * opt(u) where opt is the native optimum.
double spo_reference(const dff::DecisionOracle& o, const std::vector<double>& ct,
                     const std::vector<double>& c) {
  const double s = dff::sense_sign(o.sense());
  std::vector<double> u(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) u[i] = 2.0 * ct[i] - c[i];
  const double min_inner = s * dff::brute_force_solve(o, u).objective;
  const auto w_star = dff::brute_force_solve(o, c).w;
  double tail = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) tail += s * (2.0 * ct[i] - c[i]) * w_star[i];
  return -min_inner + tail;
}

std::vector<std::unique_ptr<dff::DecisionOracle>> small_oracles() {
  std::vector<std::unique_ptr<dff::DecisionOracle>> out;
  out.push_back(std::make_unique<dff::GridShortestPathOracle>(dff::GridGraph(2, 2)));
  out.push_back(std::make_unique<dff::GridShortestPathOracle>(dff::GridGraph(3, 3)));
  out.push_back(std::make_unique<dff::AllocationOracle>(
      dff::AllocationInstance{{0.5, 1.0, 0.8, 1.2, 0.3}, 1.7}));
  return out;
}

TEST(SpoPlus, MatchesDefinitionAndBoundsRegret) {
  dff::Rng rng(1);
  for (const auto& o : small_oracles()) {
    for (int t = 0; t < 100; ++t) {
      const auto c = random_vector(rng, o->dim(), 0.0, 2.0);
      const auto ct = random_vector(rng, o->dim(), -0.5, 2.0);
      const double loss = dff::spo_plus_loss(*o, ct, c);
      EXPECT_NEAR(loss, spo_reference(*o, ct, c), 1e-12);
      EXPECT_GE(loss, dff::decision_regret(*o, c, ct) - 1e-9);
      EXPECT_LE(std::abs(dff::spo_plus_loss(*o, c, c)), 1e-9);
    }
  }
}

TEST(SpoPlus, SubgradientSatisfiesConvexityInequality) {
  dff::Rng rng(2);
  for (const auto& o : small_oracles()) {
    for (int t = 0; t < 100; ++t) {
      const auto c = random_vector(rng, o->dim(), 0.0, 2.0);
      const auto ct = random_vector(rng, o->dim(), -0.5, 2.0);
      const auto ct2 = random_vector(rng, o->dim(), -0.5, 2.0);
      const auto r = dff::spo_plus(*o, ct, c);
      EXPECT_EQ(r.loss, dff::spo_plus_loss(*o, ct, c));
      EXPECT_EQ(r.gradient, dff::spo_plus_subgradient(*o, ct, c));
      double lin = r.loss;
      for (std::size_t i = 0; i < c.size(); ++i) lin += r.gradient[i] * (ct2[i] - ct[i]);
      EXPECT_GE(dff::spo_plus_loss(*o, ct2, c), lin - 1e-9);
    }
  }
}

TEST(SpoPlus, CachedTruthGivesTheSameAnswer) {
  dff::GridShortestPathOracle o{dff::GridGraph(3, 3)};
  dff::Rng rng(3);
  const auto c = random_vector(rng, o.dim(), 0.0, 1.0);
  const auto ct = random_vector(rng, o.dim(), 0.0, 1.0);
  const auto truth = o.solve(c);
  const auto a = dff::spo_plus(o, ct, c, &truth);
  const auto b = dff::spo_plus(o, ct, c);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.gradient, b.gradient);
}

TEST(SpoPlus, HandComputedGridCase) {
  // 2x2 grid, edges 0:(0->1) 1:(0->2) 2:(1->3) 3:(2->3).
  dff::GridShortestPathOracle o{dff::GridGraph(2, 2)};
  const std::vector<double> c{1, 3, 1, 3};   // w*(c) = right-first path {0, 2}
  const std::vector<double> ct{3, 1, 3, 1};  // 2ct - c = {5, -1, 5, -1}
  // min over paths of (2ct - c)^T w = -2 (down-first path {1, 3}).
  // loss = 2 + (2ct - c)^T w*(c) = 2 + 10 = 12.
  const auto r = dff::spo_plus(o, ct, c);
  EXPECT_EQ(r.loss, 12.0);
  EXPECT_EQ(r.gradient, (std::vector<double>{2, -2, 2, -2}));
}

TEST(Adam, HandTracedSteps) {
  dff::AdamState st;
  std::vector<double> theta{1.0, -2.0};
  const dff::AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};

  dff::adam_step(st, theta, std::vector<double>{0.5, 0.0}, cfg);
  // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25.
  const double t1 = 1.0 - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
  EXPECT_DOUBLE_EQ(theta[0], t1);
  EXPECT_EQ(theta[1], -2.0);
  EXPECT_EQ(st.t, 1);

  dff::adam_step(st, theta, std::vector<double>{-0.2, 0.0}, cfg);
  // m = 0.9 * 0.05 - 0.02 = 0.025, v = 0.999 * 0.00025 + 0.001 * 0.04.
  const double m2 = 0.9 * 0.05 + 0.1 * -0.2;
  const double v2 = 0.999 * 0.00025 + 0.001 * 0.04;
  const double mhat = m2 / (1.0 - 0.81);
  const double vhat = v2 / (1.0 - 0.999 * 0.999);
  EXPECT_NEAR(theta[0], t1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-15);
  EXPECT_THROW(dff::adam_step(st, theta, std::vector<double>{1.0}, cfg), dff::DataError);
}

TEST(TrainConfig, Validation) {
  dff::TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), dff::UsageError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), dff::UsageError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), dff::UsageError);
}

struct GridFixture {
  dff::GridShortestPathOracle oracle{dff::GridGraph(3, 3)};
  dff::Dataset train, val;
  std::shared_ptr<dff::TreeEnsemble> backbone;
  std::vector<dff::CostVector> train_preds, val_preds;

  GridFixture() {
    auto spec = dff::GeneratorSpec::preset(2, oracle.dim(), 4);
    spec.n_train = 60;
    spec.n_test = 30;
    const auto data = dff::generate_datasets(spec);
    train = data.train;
    val = data.test;
    backbone = std::make_shared<dff::TreeEnsemble>(dff::fit_gbt(train, {1, 10, 0.1}));
    train_preds = dff::predict_all(*backbone, train);
    val_preds = dff::predict_all(*backbone, val);
  }
};

dff::TrainConfig quick_config(double eps) {
  dff::TrainConfig c;
  c.max_epochs = 15;
  c.patience = 5;
  c.lr = 1e-2;
  c.batch_size = 16;
  c.hidden = {8};
  c.epsilon = eps;
  c.seed = 11;
  return c;
}

TEST(TrainDff, EpochZeroIsTheBackbone) {
  GridFixture f;
  const auto r = dff::train_dff(f.train_preds, f.train, f.val_preds, f.val, f.oracle,
                                quick_config(0.5));
  const double backbone_ndr = dff::summarize_regret(f.oracle, f.val.cost_vectors(), f.val_preds)
                                  .normalized();
  ASSERT_FALSE(r.report.val_ndr.empty());
  EXPECT_EQ(r.report.val_ndr.front(), backbone_ndr);
  EXPECT_EQ(r.report.val_ndr.size(), r.report.epochs_run + 1);
  EXPECT_EQ(r.report.stop_metric, "val_ndr");
  // The restored parameters realize the best recorded validation NDR.
  dff::DffPredictor pred(f.backbone, r.net);
  std::vector<dff::CostVector> out;
  for (std::size_t i = 0; i < f.val.size(); ++i) out.push_back(pred.correct(f.val[i].x, f.val_preds[i]));
  const double got = dff::summarize_regret(f.oracle, f.val.cost_vectors(), out).normalized();
  EXPECT_EQ(got, r.report.val_ndr[r.report.best_epoch]);
  EXPECT_LE(got, backbone_ndr);
}

TEST(TrainDff, EpsilonZeroReproducesBackboneExactly) {
  GridFixture f;
  const auto r = dff::train_dff(f.train_preds, f.train, f.val_preds, f.val, f.oracle,
                                quick_config(0.0));
  for (std::size_t i = 0; i < f.val.size(); ++i) {
    EXPECT_EQ(r.net.forward(f.val[i].x, f.val_preds[i]), f.val_preds[i]);
  }
}

TEST(TrainDff, DeterministicForAFixedSeed) {
  GridFixture f;
  const auto a = dff::train_dff(f.train_preds, f.train, f.val_preds, f.val, f.oracle,
                                quick_config(0.5));
  const auto b = dff::train_dff(f.train_preds, f.train, f.val_preds, f.val, f.oracle,
                                quick_config(0.5));
  ASSERT_EQ(a.net.num_params(), b.net.num_params());
  for (std::size_t i = 0; i < a.net.num_params(); ++i) EXPECT_EQ(a.net.params()[i], b.net.params()[i]);
  EXPECT_EQ(a.report.to_json(false).dump(), b.report.to_json(false).dump());
}

TEST(TrainDff, RejectsMismatchedInputs) {
  GridFixture f;
  std::vector<dff::CostVector> short_preds(f.train_preds.begin(), f.train_preds.end() - 1);
  EXPECT_THROW(dff::train_dff(short_preds, f.train, f.val_preds, f.val, f.oracle, quick_config(0.5)),
               dff::DataError);
  dff::GridShortestPathOracle wrong{dff::GridGraph(2, 2)};
  EXPECT_THROW(dff::train_dff(f.train_preds, f.train, f.val_preds, f.val, wrong, quick_config(0.5)),
               dff::DataError);
}

TEST(TrainNn, MseTrainingImprovesValidationMse) {
  GridFixture f;
  auto cfg = quick_config(0.5);
  cfg.max_epochs = 40;
  const auto r = dff::train_nn(f.train, f.val, f.oracle, dff::NnLoss::kMse, cfg);
  EXPECT_EQ(r.report.stop_metric, "val_mse");
  EXPECT_LT(r.report.val_mse[r.report.best_epoch], r.report.val_mse.front());
  // Zero output layer: the untrained network predicts the training mean.
  EXPECT_EQ(r.model->output_dim(), f.oracle.dim());
}

TEST(TrainNn, SpoPlusUsesValidationNdrAndRoundTrips) {
  GridFixture f;
  const auto r = dff::train_nn(f.train, f.val, f.oracle, dff::NnLoss::kSpoPlus, quick_config(0.5));
  EXPECT_EQ(r.report.stop_metric, "val_ndr");
  testing_support::TempDir tmp;
  r.model->save(tmp / "nn.txt");
  const auto back = dff::NnPredictor::load(tmp / "nn.txt");
  for (const auto& s : f.val.samples()) EXPECT_EQ(back.predict(s.x), r.model->predict(s.x));
}

TEST(DffPredictor, PredictComposesBackboneAndCorrection) {
  GridFixture f;
  const auto r = dff::train_dff(f.train_preds, f.train, f.val_preds, f.val, f.oracle,
                                quick_config(0.3));
  dff::DffPredictor pred(f.backbone, r.net);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(pred.predict(f.val[i].x), r.net.forward(f.val[i].x, f.val_preds[i]));
  }
  dff::CorrectionConfig wrong;
  wrong.p = 2;
  wrong.d = 3;
  EXPECT_THROW(dff::DffPredictor(f.backbone, dff::CorrectionNet(wrong, 1)), dff::DataError);
}

}  // namespace
