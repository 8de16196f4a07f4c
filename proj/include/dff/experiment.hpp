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

// Experiment configuration, benchmark generation, method fitting and the
// bench / sweep runners with their report files.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dff/backbone.hpp"
#include "dff/core.hpp"
#include "dff/datagen.hpp"
#include "dff/oracle.hpp"
#include "dff/theory.hpp"
#include "dff/training.hpp"
#include "json.hpp"

namespace dff {

enum class Benchmark { kGridFlow, kPortfolio, kAllocation, kAllocationSim };

std::string benchmark_name(Benchmark b);
Benchmark parse_benchmark(const std::string& name);
const std::vector<std::string>& known_methods();
bool is_dff_method(const std::string& method);

struct DataConfig {
  std::size_t p = 5;
  std::size_t n_train = 100;
  std::size_t n_test = 1000;
  double val_frac = 0.2;
  std::optional<double> noise;  // benchmark default when unset
  std::optional<std::string> mechanism;
  std::optional<int> degree;
  int grid_rows = 5;
  int grid_cols = 5;
  std::size_t assets = 10;
  std::size_t factors = 4;
  std::size_t cities = 20;
};

struct BackboneConfig {
  int depth = 2;
  int trees = 100;
  double shrinkage = 0.1;
  double subsample = 0.5;
  std::size_t folds = 2;
};

struct ExperimentConfig {
  Benchmark benchmark = Benchmark::kGridFlow;
  int variant = 1;
  std::vector<std::string> methods{"boost_2fold", "dff"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  double epsilon = 0.5;
  std::string dff_backbone = "boost_2fold";
  std::vector<double> eps_grid{0.0, 0.1, 0.2, 0.3, 0.5};
  std::size_t bins = 40;
  TrainConfig train;
  DataConfig data;
  BackboneConfig backbone;
  // Execution settings; they never change results and are not hashed.
  std::size_t workers = 1;
  std::string out_dir = "out";

  void validate() const;
  /// Everything that determines results, in a fixed key order.
  nlohmann::ordered_json to_json() const;
  std::string hash() const;
};

/// Sets one "section.key" entry from its text form. Unknown keys, and values
/// that do not parse, raise UsageError.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
/// Reads an INI-style file with [experiment], [data], [train] and [backbone]
/// sections. Values may be quoted; lists are comma separated and may be
/// wrapped in brackets.
ExperimentConfig load_config(const std::filesystem::path& path);
/// `--seeds` semantics: a single integer N means seeds 0..N-1, a comma list
/// gives the seeds explicitly.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Everything one seed of a benchmark needs.
struct BenchmarkData {
  Benchmark benchmark = Benchmark::kGridFlow;
  Dataset train;  // includes the validation portion
  Dataset test;
  std::shared_ptr<const DecisionOracle> oracle;
  std::optional<AllocationScenario> allocation;
  std::optional<SimulationScenario> simulation;
};

BenchmarkData generate_benchmark(const ExperimentConfig& config, std::uint64_t seed);
/// benchmark.json, train.csv, test.csv (with sidecars), instance.json and,
/// when present, scenario.json / simulation.json.
void save_benchmark(const std::filesystem::path& dir, const BenchmarkData& data);
BenchmarkData load_benchmark(const std::filesystem::path& dir);

struct FittedMethod {
  std::string name;
  std::shared_ptr<const Predictor> predictor;  // empty for fixed-decision rules
  std::vector<CostVector> train_preds;         // out-of-fold where applicable
  std::optional<std::vector<double>> decision;  // fixed decision (avg_alloc)
  std::optional<TrainReport> report;
  std::string backbone;                        // for fine-tuned methods
};

/// Fits methods for one seed, reusing already fitted backbones.
class MethodFitter {
 public:
  MethodFitter(const ExperimentConfig& config, const BenchmarkData& data, std::uint64_t seed);

  const FittedMethod& fit(const std::string& method);
  const Dataset& train() const noexcept { return split_.train; }
  const Dataset& val() const noexcept { return split_.val; }
  double epsilon() const noexcept { return epsilon_; }
  /// Fine-tuning epsilon for subsequent dff fits.
  void set_epsilon(double eps);

 private:
  FittedMethod fit_uncached(const std::string& method);
  FittedMethod fit_dff(const std::string& method, const std::string& backbone);

  const ExperimentConfig& config_;
  const BenchmarkData& data_;
  std::uint64_t seed_;
  DatasetSplit split_;
  double epsilon_;
  std::map<std::string, FittedMethod> cache_;
};

struct MethodEvaluation {
  double ndr = 0.0;
  double mse = 0.0;  // NaN for fixed-decision rules
  std::vector<CostVector> predictions;
  std::optional<BoundReport> bounds;  // fine-tuned methods only
  double mse_ceiling = 0.0;           // NaN unless bounds are present
};

/// Test-set NDR and MSE. Fine-tuned predictors are evaluated on top of
/// `backbone_preds` (computed when not given) and get the bound diagnostics.
MethodEvaluation evaluate_method(const FittedMethod& fitted, const Dataset& test,
                                 const DecisionOracle& oracle,
                                 const std::vector<CostVector>* backbone_preds = nullptr);

struct CellResult {
  std::string method;
  std::uint64_t seed = 0;
  bool ok = false;
  double ndr = 0.0;
  double mse = 0.0;
  double mse_ceiling = 0.0;
  bool has_bounds = false;
  std::size_t trust_violations = 0;
  std::size_t cosine_violations = 0;
  std::size_t rmse_violations = 0;
  std::string error;
};

struct MethodAggregate {
  std::string method;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double ndr_mean = 0.0;
  double ndr_std = 0.0;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  std::size_t violations = 0;
};

struct ExperimentReport {
  nlohmann::ordered_json config;
  std::string benchmark;
  int variant = 1;
  double epsilon = 0.0;
  std::vector<CellResult> cells;
  std::vector<MethodAggregate> aggregates;
  std::map<std::string, double> wasserstein;

  const MethodAggregate* aggregate(const std::string& method) const;
  nlohmann::ordered_json to_json() const;
  static ExperimentReport from_json(const nlohmann::ordered_json& j);
  std::string to_csv() const;
  std::string to_table() const;
};

std::vector<MethodAggregate> aggregate_cells(const std::vector<std::string>& methods,
                                             const std::vector<CellResult>& cells);

/// Runs every (method, seed) cell and writes report.csv, report.json,
/// hist_<method>.csv, hist_truth.csv, bounds.csv, distribution.csv and
/// manifest.json under config.out_dir.
ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport load_report(const std::filesystem::path& path);

struct SweepRow {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  double ndr = 0.0;
  double mse = 0.0;
  double backbone_ndr = 0.0;
  double backbone_mse = 0.0;
  double mse_ceiling = 0.0;
  std::size_t trust_violations = 0;
  std::string error;
};

struct SweepSummaryRow {
  double epsilon = 0.0;
  std::size_t n = 0;
  double ndr_mean = 0.0;
  double mse_mean = 0.0;
  double backbone_ndr_mean = 0.0;
  double backbone_mse_mean = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummaryRow> summary;

  std::string to_csv() const;
  std::string summary_csv() const;
};

/// Fine-tunes the configured backbone at every epsilon in config.eps_grid for
/// every seed. Writes sweep.csv, sweep_summary.csv and manifest.json.
SweepResult epsilon_sweep(const ExperimentConfig& config);

// Model directories for the train / eval subcommands.
/// model.json describing the predictor tree plus one file per component.
/// Simulation backbones are stored as their scenario.
void save_model(const std::filesystem::path& dir, const FittedMethod& fitted,
                const BenchmarkData& data);

struct LoadedModel {
  std::string method;
  std::shared_ptr<const Predictor> predictor;
  std::shared_ptr<const Predictor> backbone;  // set for fine-tuned methods
  std::optional<std::vector<double>> decision;
  double epsilon = 0.0;
};
LoadedModel load_model(const std::filesystem::path& dir);

/// Writes a manifest listing every regular file in `dir` with its size and
/// FNV-1a digest.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& config);
std::string fnv1a_hex(std::string_view bytes);

}  // namespace dff
