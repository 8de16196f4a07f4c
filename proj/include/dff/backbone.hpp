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

// Predictive backbones x -> c_hat. Some are differentiable, most are not; the
// fine-tuning layer only ever needs their predictions.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dff/core.hpp"
#include "json.hpp"

namespace dff {

/// Uniform prediction interface over every backbone kind.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual CostVector predict(std::span<const double> x) const = 0;
  virtual std::string describe() const = 0;
};

/// Checked prediction: validates the input width and that the output is
/// finite, attaching the backbone description to any failure.
CostVector predict(const Predictor& model, std::span<const double> x);
std::vector<CostVector> predict_all(const Predictor& model, const Dataset& data);

// ---------------------------------------------------------------------------
// Linear models

class LinearModel final : public Predictor {
 public:
  LinearModel() = default;
  /// beta is p x d (or (p+1) x d with a trailing intercept row).
  LinearModel(Eigen::MatrixXd beta, bool intercept = false);

  std::size_t input_dim() const override;
  std::size_t output_dim() const override { return static_cast<std::size_t>(beta_.cols()); }
  CostVector predict(std::span<const double> x) const override;
  std::string describe() const override { return "linear"; }

  const Eigen::MatrixXd& beta() const noexcept { return beta_; }
  bool intercept() const noexcept { return intercept_; }

  /// Set when the ordinary least-squares fit needed the ridge fallback.
  bool ridge_applied = false;
  double condition_estimate = 1.0;

  nlohmann::ordered_json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);

 private:
  Eigen::MatrixXd beta_;
  bool intercept_ = false;
};

/// beta = (X^T X)^{-1} X^T Y. When X^T X is numerically rank deficient a ridge
/// of 1e-8 * trace(X^T X) / p is added and `ridge_applied` is set.
LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, bool intercept = false);

/// Minimizes sum_i (y_i - beta^T x_i)^T Q_i (y_i - beta^T x_i).
///
/// The unknown is vec(beta) stacked column-major (column j of beta, the p
/// coefficients of output j, occupies entries [j*p, (j+1)*p)). With that
/// ordering beta^T x_i = (I_d kron x_i^T) vec(beta) and the normal equations
/// read (sum_i Q_i kron x_i x_i^T) vec(beta) = sum_i vec(x_i y_i^T Q_i).
LinearModel fit_gls(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    std::span<const Eigen::MatrixXd> q);

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;     // taken when x[feature] <= threshold
  int right = -1;
  double value = 0.0;
};

class RegressionTree {
 public:
  RegressionTree() : nodes_{TreeNode{}} {}
  explicit RegressionTree(std::vector<TreeNode> nodes);

  double predict(std::span<const double> x) const;
  int depth() const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

/// Exact least-squares tree on the given rows: thresholds are midpoints of
/// sorted unique feature values, leaves hold the mean target.
RegressionTree fit_regression_tree(const Eigen::MatrixXd& x, std::span<const double> y,
                                   std::span<const std::size_t> rows, int max_depth);

/// Per-output tree sets. Prediction for output j is
/// base[j] + scale * sum_t trees[j][t](x); boosting uses scale = shrinkage,
/// forests use base = 0 and scale = 1 / n_trees.
class TreeEnsemble final : public Predictor {
 public:
  enum class Kind { kBoosted, kForest };

  TreeEnsemble(Kind kind, std::size_t inputs, std::vector<double> base, double scale,
               std::vector<std::vector<RegressionTree>> trees);

  std::size_t input_dim() const override { return inputs_; }
  std::size_t output_dim() const override { return base_.size(); }
  CostVector predict(std::span<const double> x) const override;
  std::string describe() const override;

  Kind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  const std::vector<double>& base() const noexcept { return base_; }
  const std::vector<std::vector<RegressionTree>>& trees() const noexcept { return trees_; }
  std::size_t trees_per_output() const { return trees_.empty() ? 0 : trees_.front().size(); }
  int max_depth() const;

  /// Boosted ensemble restricted to its first `n` trees per output.
  TreeEnsemble prefix(std::size_t n) const;

  /// Line-oriented dump; round-trips bit-exactly.
  void write(std::ostream& out) const;
  static TreeEnsemble read(std::istream& in);

 private:
  Kind kind_;
  std::size_t inputs_;
  std::vector<double> base_;
  double scale_;
  std::vector<std::vector<RegressionTree>> trees_;
};

struct GbtConfig {
  int max_depth = 2;
  int n_trees = 100;
  double shrinkage = 0.1;
};

struct ForestConfig {
  int max_depth = 2;
  int n_trees = 100;
  double subsample = 0.5;
  std::uint64_t seed = 0;
};

/// First-order gradient boosting on squared error, one tree set per output.
TreeEnsemble fit_gbt(const Dataset& data, const GbtConfig& config);
/// Average of trees fit on seeded subsamples drawn without replacement.
TreeEnsemble fit_random_forest(const Dataset& data, const ForestConfig& config);

// ---------------------------------------------------------------------------
// Opaque and composite backbones

class OpaqueBackbone final : public Predictor {
 public:
  using Function = std::function<CostVector(std::span<const double>)>;

  OpaqueBackbone(Function fn, std::size_t inputs, std::size_t outputs, std::string description);

  std::size_t input_dim() const override { return inputs_; }
  std::size_t output_dim() const override { return outputs_; }
  CostVector predict(std::span<const double> x) const override;
  std::string describe() const override { return description_; }

 private:
  Function fn_;
  std::size_t inputs_;
  std::size_t outputs_;
  std::string description_;
};

using FitFunction = std::function<std::shared_ptr<const Predictor>(const Dataset&)>;

/// k fold-models plus the fold assignment of the data they were fit on.
/// Test-time predictions average the fold-models unless a full-data model is
/// attached and selected.
class CrossFitBackbone final : public Predictor {
 public:
  enum class Mode { kAverageFolds, kFullData };

  CrossFitBackbone(std::vector<std::shared_ptr<const Predictor>> fold_models,
                   std::vector<std::size_t> fold_of_sample);

  std::size_t input_dim() const override { return folds_.front()->input_dim(); }
  std::size_t output_dim() const override { return folds_.front()->output_dim(); }
  CostVector predict(std::span<const double> x) const override;
  std::string describe() const override;

  std::size_t folds() const noexcept { return folds_.size(); }
  const std::shared_ptr<const Predictor>& fold_model(std::size_t k) const { return folds_[k]; }
  std::size_t fold_of(std::size_t sample) const { return fold_of_sample_[sample]; }
  const std::vector<std::size_t>& fold_assignment() const noexcept { return fold_of_sample_; }

  void set_full_model(std::shared_ptr<const Predictor> model);
  void set_mode(Mode mode);
  Mode mode() const noexcept { return mode_; }

 private:
  std::vector<std::shared_ptr<const Predictor>> folds_;
  std::vector<std::size_t> fold_of_sample_;
  std::shared_ptr<const Predictor> full_;
  Mode mode_ = Mode::kAverageFolds;
};

struct CrossFitResult {
  std::vector<CostVector> out_of_fold;  // one per training sample, in order
  std::shared_ptr<CrossFitBackbone> backbone;
};

/// Fits one model per fold complement and predicts every sample with the
/// model that did not see it.
CrossFitResult crossfit_predict_train(const Dataset& data, std::size_t k, const FitFunction& fit,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Simulation backbone

/// Toy market simulator. For city j the conversion rate z solves
///   z = sigmoid(a_j * s_j(x) + b_j * z + c0_j),
/// where s_j(x) = <subsidy_weights_j, x> is the city's subsidy signal.
struct SimulationScenario {
  std::size_t inputs = 0;
  std::vector<std::vector<double>> subsidy_weights;  // K rows of length `inputs`
  std::vector<double> a;   // subsidy sensitivity
  std::vector<double> b;   // self-reinforcement
  std::vector<double> c0;  // baseline logit

  std::size_t cities() const { return a.size(); }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SimulationScenario from_json(const nlohmann::json& j);
};

/// One application of the (undamped) iteration map for a single city.
double simulation_step(double a, double b, double c0, double signal, double z);
/// Damped (0.5) fixed-point iteration; throws SolverError after 1,000 steps.
double simulate_conversion(double a, double b, double c0, double signal);
/// Wraps the simulator as a prediction-only backbone.
std::shared_ptr<OpaqueBackbone> simulation_backbone(const SimulationScenario& scenario);

}  // namespace dff
