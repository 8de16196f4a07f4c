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
#include <set>
#include <sstream>

#include "dff/backbone.hpp"
#include "dff/error.hpp"
#include "support/fixtures.hpp"
#include "support/reference.hpp"

namespace {

std::vector<double> column(const Eigen::MatrixXd& m, int j) {
  std::vector<double> out(m.rows());
  for (int i = 0; i < m.rows(); ++i) out[i] = m(i, j);
  return out;
}

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

TEST(Ols, MatchesGaussianEliminationReference) {
  dff::Rng rng(1);
  const int n = 40, p = 4, d = 3;
  Eigen::MatrixXd x(n, p), y(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
    for (int j = 0; j < d; ++j) y(i, j) = rng.normal();
  }
  const auto model = dff::fit_ols(x, y);
  for (int j = 0; j < d; ++j) {
    const auto want = ref::least_squares(row_major(x), n, p, column(y, j));
    for (int a = 0; a < p; ++a) EXPECT_NEAR(model.beta()(a, j), want[a], 1e-10);
  }
  EXPECT_FALSE(model.ridge_applied);
}

TEST(Ols, InterceptRecoversAffineMapExactly) {
  dff::Rng rng(2);
  const int n = 30, p = 3;
  Eigen::MatrixXd x(n, p), y(n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
    y(i, 0) = 2.0 * x(i, 0) - x(i, 2) + 5.0;
    y(i, 1) = -3.0;
  }
  const auto model = dff::fit_ols(x, y, true);
  const std::vector<double> probe{0.3, -1.0, 2.0};
  const auto out = model.predict(probe);
  EXPECT_NEAR(out[0], 2.0 * 0.3 - 2.0 + 5.0, 1e-10);
  EXPECT_NEAR(out[1], -3.0, 1e-10);
  EXPECT_EQ(model.input_dim(), 3u);
}

TEST(Ols, RankDeficientFallsBackToRidge) {
  Eigen::MatrixXd x(5, 2), y(5, 1);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = i;
    x(i, 1) = 2.0 * i;
    y(i, 0) = i;
  }
  const auto model = dff::fit_ols(x, y);
  EXPECT_TRUE(model.ridge_applied);
  EXPECT_TRUE(model.beta().allFinite());
}

TEST(Gls, IdentityWeightsReduceToOls) {
  dff::Rng rng(3);
  Eigen::MatrixXd x(25, 3), y(25, 2);
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    for (int j = 0; j < 2; ++j) y(i, j) = rng.normal();
  }
  std::vector<Eigen::MatrixXd> q(25, Eigen::MatrixXd::Identity(2, 2));
  const auto gls = dff::fit_gls(x, y, q);
  const auto ols = dff::fit_ols(x, y);
  EXPECT_LE((gls.beta() - ols.beta()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gls, DiagonalWeightsMatchWeightedLeastSquares) {
  dff::Rng rng(4);
  const int n = 30, p = 2, d = 2;
  Eigen::MatrixXd x(n, p), y(n, d);
  std::vector<Eigen::MatrixXd> q;
  std::vector<std::vector<double>> weights(d, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
    for (int j = 0; j < d; ++j) y(i, j) = rng.normal();
    Eigen::MatrixXd qi = Eigen::MatrixXd::Zero(d, d);
    for (int j = 0; j < d; ++j) {
      qi(j, j) = rng.uniform(0.1, 3.0);
      weights[j][i] = qi(j, j);
    }
    q.push_back(qi);
  }
  const auto gls = dff::fit_gls(x, y, q);
  for (int j = 0; j < d; ++j) {
    // Weighted LS = OLS on rows scaled by sqrt(weight).
    std::vector<double> xs, ys;
    for (int i = 0; i < n; ++i) {
      const double s = std::sqrt(weights[j][i]);
      for (int a = 0; a < p; ++a) xs.push_back(s * x(i, a));
      ys.push_back(s * y(i, j));
    }
    const auto want = ref::least_squares(xs, n, p, ys);
    for (int a = 0; a < p; ++a) EXPECT_NEAR(gls.beta()(a, j), want[a], 1e-10);
  }
}

TEST(LinearModel, JsonRoundTrip) {
  Eigen::MatrixXd beta(3, 2);
  beta << 1, 2, 3, 4, 5, 6.5;
  const dff::LinearModel m(beta, true);
  const auto back = dff::LinearModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.beta(), beta);
  EXPECT_TRUE(back.intercept());
}

TEST(RegressionTree, SingleSplitOnStepFunction) {
  Eigen::MatrixXd x(6, 1);
  x << 1, 2, 3, 10, 11, 12;
  const std::vector<double> y{0, 0, 0, 5, 5, 5};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  const auto tree = dff::fit_regression_tree(x, y, rows, 3);
  EXPECT_EQ(tree.depth(), 1);
  EXPECT_EQ(tree.nodes()[0].threshold, 6.5);
  EXPECT_EQ(tree.predict(std::vector<double>{2.5}), 0.0);
  EXPECT_EQ(tree.predict(std::vector<double>{6.5}), 0.0);
  EXPECT_EQ(tree.predict(std::vector<double>{7.0}), 5.0);
}

TEST(RegressionTree, DepthZeroIsTheMean) {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  const std::vector<double> y{1, 2, 3, 6};
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const auto tree = dff::fit_regression_tree(x, y, rows, 0);
  EXPECT_EQ(tree.depth(), 0);
  EXPECT_EQ(tree.predict(std::vector<double>{100}), 3.0);
}

TEST(RegressionTree, ConstantTargetDoesNotSplit) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 4, 2, 3, 3, 2, 4, 1;
  const std::vector<double> y(4, 2.5);
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  EXPECT_EQ(dff::fit_regression_tree(x, y, rows, 4).depth(), 0);
}

TEST(RegressionTree, FitsXorWithDepthTwo) {
  Eigen::MatrixXd x(8, 2);
  std::vector<double> y;
  for (int i = 0; i < 8; ++i) {
    const int a = (i >> 0) & 1, b = (i >> 1) & 1;
    x(i, 0) = a + 0.01 * i;
    x(i, 1) = b;
    y.push_back(a == b ? 1.0 : -1.0);
  }
  std::vector<std::size_t> rows(8);
  for (std::size_t i = 0; i < 8; ++i) rows[i] = i;
  // Depth one cannot separate xor, so its best split has no gain; depth two
  // needs a first split to exist, which requires positive gain.
  const auto tree = dff::fit_regression_tree(x, y, rows, 2);
  EXPECT_LE(tree.depth(), 2);
  EXPECT_THROW(dff::fit_regression_tree(x, y, rows, -1), dff::UsageError);
}

dff::Dataset smooth_dataset(std::size_t n, std::uint64_t seed) {
  dff::Rng rng(seed);
  std::vector<dff::Sample> s(n);
  for (auto& v : s) {
    v.x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    v.c = {std::sin(v.x[0]) + 0.1 * rng.normal(), v.x[0] * v.x[1]};
  }
  return dff::Dataset(std::move(s), 2, 2);
}

double train_mse(const dff::Predictor& m, const dff::Dataset& ds) {
  double s = 0.0;
  for (const auto& smp : ds.samples()) {
    const auto out = m.predict(smp.x);
    for (std::size_t j = 0; j < out.size(); ++j) s += (out[j] - smp.c[j]) * (out[j] - smp.c[j]);
  }
  return s / static_cast<double>(ds.size() * ds.d());
}

TEST(Gbt, MoreTreesFitTrainingDataBetter) {
  const auto ds = smooth_dataset(200, 5);
  const auto small = dff::fit_gbt(ds, {2, 5, 0.1});
  const auto large = dff::fit_gbt(ds, {2, 100, 0.1});
  EXPECT_LT(train_mse(large, ds), train_mse(small, ds));
  EXPECT_EQ(large.trees_per_output(), 100u);
  EXPECT_LE(large.max_depth(), 2);
  // Prediction is base + shrinkage * sum of trees.
  const std::vector<double> x{0.3, -0.7};
  double manual = large.base()[0];
  for (const auto& t : large.trees()[0]) manual += large.scale() * t.predict(x);
  EXPECT_NEAR(large.predict(x)[0], manual, 1e-12);
}

TEST(Gbt, ZeroShrinkageGivesTheMean) {
  const auto ds = smooth_dataset(50, 6);
  const auto m = dff::fit_gbt(ds, {2, 10, 0.0});
  double mean = 0.0;
  for (const auto& s : ds.samples()) mean += s.c[1];
  mean /= 50.0;
  EXPECT_NEAR(m.predict(std::vector<double>{0, 0})[1], mean, 1e-12);
}

TEST(Gbt, PrefixMatchesShorterFit) {
  const auto ds = smooth_dataset(80, 7);
  const auto full = dff::fit_gbt(ds, {2, 30, 0.1});
  const auto shorter = dff::fit_gbt(ds, {2, 10, 0.1});
  const std::vector<double> x{1.0, 0.5};
  EXPECT_EQ(full.prefix(10).predict(x), shorter.predict(x));
}

TEST(Gbt, RejectsBadConfig) {
  const auto ds = smooth_dataset(10, 7);
  EXPECT_THROW(dff::fit_gbt(ds, {2, 101, 0.1}), dff::UsageError);
  EXPECT_THROW(dff::fit_gbt(ds, {2, 10, 1.5}), dff::UsageError);
}

TEST(Forest, DeterministicAndAveraged) {
  const auto ds = smooth_dataset(100, 8);
  const dff::ForestConfig cfg{3, 20, 0.5, 11};
  const auto a = dff::fit_random_forest(ds, cfg);
  const auto b = dff::fit_random_forest(ds, cfg);
  const std::vector<double> x{0.1, 0.2};
  EXPECT_EQ(a.predict(x), b.predict(x));
  EXPECT_EQ(a.scale(), 1.0 / 20.0);
  EXPECT_EQ(a.base(), (std::vector<double>{0.0, 0.0}));
  auto other = cfg;
  other.seed = 12;
  EXPECT_NE(dff::fit_random_forest(ds, other).predict(x), a.predict(x));
}

TEST(TreeEnsemble, DumpRoundTripsBitExactly) {
  const auto ds = smooth_dataset(60, 9);
  for (const auto& m : {dff::fit_gbt(ds, {3, 15, 0.1}),
                        dff::fit_random_forest(ds, {2, 7, 0.6, 3})}) {
    std::stringstream buf;
    m.write(buf);
    const auto back = dff::TreeEnsemble::read(buf);
    std::stringstream again;
    back.write(again);
    std::stringstream first;
    m.write(first);
    EXPECT_EQ(first.str(), again.str());
    for (const auto& s : ds.samples()) EXPECT_EQ(back.predict(s.x), m.predict(s.x));
  }
  std::stringstream junk("not a dump");
  EXPECT_THROW(dff::TreeEnsemble::read(junk), dff::DataError);
}

TEST(CrossFit, OutOfFoldPredictionsNeverSeeTheirSample) {
  const auto ds = smooth_dataset(30, 10);
  // Each fold model remembers its training rows by their first feature.
  struct Memo final : dff::Predictor {
    std::set<double> seen;
    std::size_t input_dim() const override { return 2; }
    std::size_t output_dim() const override { return 2; }
    dff::CostVector predict(std::span<const double> x) const override {
      const double flag = seen.count(x[0]) ? 1.0 : 0.0;
      return {flag, static_cast<double>(seen.size())};
    }
    std::string describe() const override { return "memo"; }
  };
  const auto cf = dff::crossfit_predict_train(
      ds, 3,
      [](const dff::Dataset& d) {
        auto m = std::make_shared<Memo>();
        for (const auto& s : d.samples()) m->seen.insert(s.x[0]);
        return m;
      },
      4);
  ASSERT_EQ(cf.out_of_fold.size(), 30u);
  for (const auto& p : cf.out_of_fold) {
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[1], 20.0);
  }
  EXPECT_EQ(cf.backbone->folds(), 3u);
  // Test-time prediction averages the fold models.
  const auto avg = cf.backbone->predict(ds[0].x);
  EXPECT_NEAR(avg[0], 2.0 / 3.0, 1e-15);
  EXPECT_THROW(cf.backbone->set_mode(dff::CrossFitBackbone::Mode::kFullData), dff::UsageError);
}

TEST(CheckedPredict, ValidatesWidthAndFiniteness) {
  dff::OpaqueBackbone nan_model(
      [](std::span<const double>) { return dff::CostVector{NAN}; }, 1, 1, "bad");
  EXPECT_THROW(dff::predict(nan_model, std::vector<double>{1.0}), dff::DataError);
  EXPECT_THROW(dff::predict(nan_model, std::vector<double>{1.0, 2.0}), dff::DataError);
  dff::OpaqueBackbone ok([](std::span<const double> x) { return dff::CostVector{2 * x[0]}; }, 1,
                         1, "double");
  EXPECT_EQ(dff::predict(ok, std::vector<double>{1.5})[0], 3.0);
}

TEST(Simulation, FixedPointSolvesTheEquation) {
  dff::Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    const double a = rng.uniform(0.1, 3), b = rng.uniform(-0.5, 0.5), c0 = rng.uniform(-2, 2);
    const double s = rng.normal();
    const double z = dff::simulate_conversion(a, b, c0, s);
    EXPECT_NEAR(z, ref::sigmoid(a * s + b * z + c0), 1e-10);
    EXPECT_DOUBLE_EQ(dff::simulation_step(a, b, c0, s, z), ref::sigmoid(a * s + b * z + c0));
  }
}

TEST(Simulation, MonotoneInSignalForPositiveSensitivity) {
  double prev = 0.0;
  for (int i = -20; i <= 20; ++i) {
    const double z = dff::simulate_conversion(1.0, 0.3, -0.5, 0.1 * i);
    EXPECT_GT(z, prev);
    prev = z;
  }
}

TEST(Simulation, UnstableFixedPointRaisesSolverError) {
  EXPECT_THROW(dff::simulate_conversion(0.0, -40.0, 20.4, 0.0), dff::SolverError);
}

TEST(Simulation, BackboneWrapsScenario) {
  dff::SimulationScenario sc;
  sc.inputs = 2;
  sc.subsidy_weights = {{1.0, 0.0}, {0.5, 0.5}};
  sc.a = {1.0, 2.0};
  sc.b = {0.1, -0.2};
  sc.c0 = {0.0, -1.0};
  const auto bb = dff::simulation_backbone(sc);
  const std::vector<double> x{0.4, -0.2};
  const auto out = bb->predict(x);
  EXPECT_EQ(out[0], dff::simulate_conversion(1.0, 0.1, 0.0, 0.4));
  EXPECT_EQ(out[1], dff::simulate_conversion(2.0, -0.2, -1.0, 0.1));
  const auto back = dff::SimulationScenario::from_json(nlohmann::json::parse(sc.to_json().dump()));
  EXPECT_EQ(dff::simulation_backbone(back)->predict(x), out);
  sc.b.pop_back();
  EXPECT_THROW(sc.validate(), dff::DataError);
}

}  // namespace
