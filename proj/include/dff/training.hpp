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

// Losses, the SPO+ surrogate, the optimizer and the training loops for the
// correction layer and the neural-network baselines.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dff/backbone.hpp"
#include "dff/core.hpp"
#include "dff/correction.hpp"
#include "dff/oracle.hpp"
#include "json.hpp"

namespace dff {

double mse_loss(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);
/// Mean squared error over every coordinate of every sample.
double batch_mse(std::span<const CostVector> pred, std::span<const CostVector> truth);

/// Canonical SPO+ in the oracle's native units. With s = +1 (minimize) or -1
/// (maximize), k = s c and k_tilde = s c_tilde:
///   loss = max_w (k - 2 k_tilde)^T w + 2 k_tilde^T w*(k) - k^T w*(k).
/// `truth` may carry a cached solve of c to save one oracle call.
double spo_plus_loss(const DecisionOracle& oracle, std::span<const double> c_tilde,
                     std::span<const double> c, const OracleSolution* truth = nullptr);

/// 2 s (w*(k) - w*(2 k_tilde - k)), a subgradient of spo_plus_loss in c_tilde.
std::vector<double> spo_plus_subgradient(const DecisionOracle& oracle,
                                         std::span<const double> c_tilde,
                                         std::span<const double> c,
                                         const OracleSolution* truth = nullptr);

struct SpoPlusResult {
  double loss = 0.0;
  std::vector<double> gradient;
};
/// Loss and subgradient from the same two solves.
SpoPlusResult spo_plus(const DecisionOracle& oracle, std::span<const double> c_tilde,
                       std::span<const double> c, const OracleSolution* truth = nullptr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& config);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double epsilon = 0.5;
  std::vector<std::size_t> hidden{32, 32, 32};
  BiasMode bias_mode = BiasMode::kZero;

  void validate() const;
  AdamConfig adam() const { return AdamConfig{lr, beta1, beta2, adam_eps}; }
};

/// Per-epoch history. Entry 0 is the untrained model; entry e > 0 follows the
/// e-th pass over the training data.
struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_ndr;
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::string stop_metric;
  double wall_seconds = 0.0;

  nlohmann::ordered_json to_json(bool include_timing = true) const;
};

struct DffResult {
  CorrectionNet net;
  TrainReport report;
};

/// Fine-tunes a correction layer on top of fixed backbone predictions.
/// `train_preds` should be out-of-fold predictions for `train`; `val_preds`
/// are backbone predictions for `val`. Early stopping keeps the epoch with
/// the strictly lowest validation NDR, starting from the identity net.
DffResult train_dff(std::span<const CostVector> train_preds, const Dataset& train,
                    std::span<const CostVector> val_preds, const Dataset& val,
                    const DecisionOracle& oracle, const TrainConfig& config);

/// Plain network x -> c_hat. Inputs are standardized and outputs are
/// de-standardized with training statistics.
class NnPredictor final : public Predictor {
 public:
  NnPredictor(Mlp mlp, FeatureScaler inputs, std::vector<double> out_mean,
              std::vector<double> out_scale);

  std::size_t input_dim() const override { return mlp_.inputs(); }
  std::size_t output_dim() const override { return mlp_.outputs(); }
  CostVector predict(std::span<const double> x) const override;
  std::string describe() const override { return "neural network"; }

  const Mlp& mlp() const noexcept { return mlp_; }
  Mlp& mutable_mlp() noexcept { return mlp_; }
  const FeatureScaler& inputs() const noexcept { return inputs_; }
  const std::vector<double>& out_mean() const noexcept { return out_mean_; }
  const std::vector<double>& out_scale() const noexcept { return out_scale_; }

  void save(const std::filesystem::path& path) const;
  static NnPredictor load(const std::filesystem::path& path);

 private:
  Mlp mlp_;
  FeatureScaler inputs_;
  std::vector<double> out_mean_;
  std::vector<double> out_scale_;
};

enum class NnLoss { kMse, kSpoPlus };

struct NnResult {
  std::shared_ptr<NnPredictor> model;
  TrainReport report;
};

/// End-to-end baseline. Early stopping uses validation MSE for the MSE loss
/// and validation NDR for SPO+.
NnResult train_nn(const Dataset& train, const Dataset& val, const DecisionOracle& oracle,
                  NnLoss loss, const TrainConfig& config);

/// Backbone followed by a trained correction layer.
class DffPredictor final : public Predictor {
 public:
  DffPredictor(std::shared_ptr<const Predictor> backbone, CorrectionNet net);

  std::size_t input_dim() const override { return backbone_->input_dim(); }
  std::size_t output_dim() const override { return backbone_->output_dim(); }
  CostVector predict(std::span<const double> x) const override;
  std::string describe() const override { return "dff over " + backbone_->describe(); }

  const std::shared_ptr<const Predictor>& backbone() const noexcept { return backbone_; }
  const CorrectionNet& net() const noexcept { return net_; }
  /// Correction applied to an already computed backbone prediction.
  CostVector correct(std::span<const double> x, std::span<const double> c_hat) const;

 private:
  std::shared_ptr<const Predictor> backbone_;
  CorrectionNet net_;
};

}  // namespace dff
