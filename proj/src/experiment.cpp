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

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "dff/error.hpp"
#include "dff/experiment.hpp"

namespace dff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

GeneratorSpec cost_spec(const ExperimentConfig& config, std::size_t d, std::uint64_t seed) {
  GeneratorSpec spec = GeneratorSpec::preset(config.variant, d, derive_seed(seed, "data"));
  spec.p = config.data.p;
  spec.n_train = config.data.n_train;
  spec.n_test = config.data.n_test;
  spec.noise = config.data.noise.value_or(0.5);
  if (config.data.mechanism) spec.mechanism = parse_mechanism(*config.data.mechanism);
  if (config.data.degree) spec.degree = *config.data.degree;
  return spec;
}

}  // namespace

BenchmarkData generate_benchmark(const ExperimentConfig& config, std::uint64_t seed) {
  BenchmarkData out;
  out.benchmark = config.benchmark;
  switch (config.benchmark) {
    case Benchmark::kGridFlow: {
      auto oracle = std::make_shared<GridShortestPathOracle>(
          GridGraph(config.data.grid_rows, config.data.grid_cols));
      GeneratedData gen = generate_datasets(cost_spec(config, oracle->dim(), seed));
      out.train = std::move(gen.train);
      out.test = std::move(gen.test);
      out.oracle = std::move(oracle);
      break;
    }
    case Benchmark::kPortfolio: {
      auto oracle = std::make_shared<PortfolioOracle>(gen_portfolio_instance(
          config.data.assets, config.data.factors, derive_seed(seed, "instance")));
      GeneratedData gen = generate_datasets(cost_spec(config, oracle->dim(), seed));
      out.train = std::move(gen.train);
      out.test = std::move(gen.test);
      out.oracle = std::move(oracle);
      break;
    }
    case Benchmark::kAllocation:
    case Benchmark::kAllocationSim: {
      AllocationScenario scenario = gen_allocation_scenario(
          config.data.cities, config.data.p, config.variant, derive_seed(seed, "scenario"));
      scenario.noise = config.data.noise.value_or(0.1);
      out.train = gen_allocation_data(scenario, config.data.n_train, derive_seed(seed, "train"));
      out.test = gen_allocation_data(scenario, config.data.n_test, derive_seed(seed, "test"));
      out.oracle = std::make_shared<AllocationOracle>(scenario.instance);
      if (config.benchmark == Benchmark::kAllocationSim) {
        out.simulation = gen_simulation_scenario(scenario, derive_seed(seed, "simulator"));
      }
      out.allocation = std::move(scenario);
      break;
    }
  }
  return out;
}

void save_benchmark(const std::filesystem::path& dir, const BenchmarkData& data) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["benchmark"] = benchmark_name(data.benchmark);
  meta["p"] = data.train.p();
  meta["d"] = data.train.d();
  meta["n_train"] = data.train.size();
  meta["n_test"] = data.test.size();
  write_text_file(dir / "benchmark.json", meta.dump(2) + "\n");
  write_dataset_csv(dir / "train.csv", data.train);
  write_dataset_csv(dir / "test.csv", data.test);
  save_oracle(dir / "instance.json", *data.oracle);
  if (data.allocation) write_text_file(dir / "scenario.json", data.allocation->to_json().dump(2) + "\n");
  if (data.simulation) {
    write_text_file(dir / "simulation.json", data.simulation->to_json().dump(2) + "\n");
  }
}

BenchmarkData load_benchmark(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("no data directory " + dir.string());
  BenchmarkData out;
  const auto meta = read_json_file(dir / "benchmark.json");
  try {
    out.benchmark = parse_benchmark(meta.at("benchmark").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed benchmark.json: ") + e.what());
  }
  out.train = read_dataset_csv(dir / "train.csv");
  out.test = read_dataset_csv(dir / "test.csv");
  out.oracle = load_oracle(dir / "instance.json");
  if (std::filesystem::exists(dir / "scenario.json")) {
    out.allocation = AllocationScenario::from_json(read_json_file(dir / "scenario.json"));
  }
  if (std::filesystem::exists(dir / "simulation.json")) {
    out.simulation = SimulationScenario::from_json(read_json_file(dir / "simulation.json"));
  }
  if (out.train.p() != out.test.p() || out.train.d() != out.test.d()) {
    throw DataError("train and test sets disagree on dimensions");
  }
  if (out.train.d() != out.oracle->dim()) throw DataError("cost width does not match the instance");
  return out;
}

// ---------------------------------------------------------------------------

MethodFitter::MethodFitter(const ExperimentConfig& config, const BenchmarkData& data,
                           std::uint64_t seed)
    : config_(config), data_(data), seed_(seed), epsilon_(config.epsilon) {
  const double vf = config.data.val_frac;
  split_ = split_dataset(data.train, SplitSpec{1.0 - vf, vf, 0.0, derive_seed(seed, "split")});
}

void MethodFitter::set_epsilon(double eps) {
  if (eps == epsilon_) return;
  epsilon_ = eps;
  for (auto it = cache_.begin(); it != cache_.end();) {
    it = is_dff_method(it->first) ? cache_.erase(it) : std::next(it);
  }
}

const FittedMethod& MethodFitter::fit(const std::string& method) {
  auto it = cache_.find(method);
  if (it != cache_.end()) return it->second;
  FittedMethod fitted = fit_uncached(method);
  return cache_.emplace(method, std::move(fitted)).first->second;
}

FittedMethod MethodFitter::fit_uncached(const std::string& method) {
  const Dataset& train = split_.train;
  FittedMethod out;
  out.name = method;
  const GbtConfig gbt{config_.backbone.depth, config_.backbone.trees, config_.backbone.shrinkage};

  if (method == "ols") {
    out.predictor = std::make_shared<LinearModel>(fit_ols(train.features(), train.costs(), true));
  } else if (method == "rf_mse") {
    const ForestConfig forest{config_.backbone.depth, config_.backbone.trees,
                              config_.backbone.subsample, derive_seed(seed_, "forest")};
    out.predictor = std::make_shared<TreeEnsemble>(fit_random_forest(train, forest));
  } else if (method == "boost_mse") {
    out.predictor = std::make_shared<TreeEnsemble>(fit_gbt(train, gbt));
  } else if (method == "boost_2fold") {
    CrossFitResult cf = crossfit_predict_train(
        train, config_.backbone.folds,
        [gbt](const Dataset& d) { return std::make_shared<TreeEnsemble>(fit_gbt(d, gbt)); },
        derive_seed(seed_, "crossfit"));
    out.predictor = cf.backbone;
    out.train_preds = std::move(cf.out_of_fold);
    return out;
  } else if (method == "nn_mse" || method == "nn_spo") {
    TrainConfig tc = config_.train;
    tc.seed = derive_seed(seed_, method);
    NnResult r = train_nn(train, split_.val, *data_.oracle,
                          method == "nn_mse" ? NnLoss::kMse : NnLoss::kSpoPlus, tc);
    out.predictor = r.model;
    out.report = std::move(r.report);
  } else if (method == "sim_backbone") {
    if (!data_.simulation) throw UsageError("sim_backbone needs the allocation_sim benchmark");
    out.predictor = simulation_backbone(*data_.simulation);
  } else if (method == "avg_alloc") {
    const auto* alloc = dynamic_cast<const AllocationOracle*>(data_.oracle.get());
    if (!alloc) throw UsageError("avg_alloc needs an allocation benchmark");
    out.decision = alloc->equal_split();
    return out;
  } else if (method == "dff") {
    return fit_dff(method, config_.dff_backbone);
  } else if (method == "dff_over_sim") {
    return fit_dff(method, "sim_backbone");
  } else {
    throw UsageError("unknown method '" + method + "'");
  }
  out.train_preds = predict_all(*out.predictor, train);
  return out;
}

FittedMethod MethodFitter::fit_dff(const std::string& method, const std::string& backbone) {
  if (is_dff_method(backbone) || backbone == "avg_alloc") {
    throw UsageError("'" + backbone + "' cannot serve as a dff backbone");
  }
  const FittedMethod& base = fit(backbone);
  const std::vector<CostVector> val_preds = predict_all(*base.predictor, split_.val);
  TrainConfig tc = config_.train;
  tc.epsilon = epsilon_;
  tc.seed = derive_seed(seed_, "dff");
  DffResult r = train_dff(base.train_preds, split_.train, val_preds, split_.val, *data_.oracle, tc);
  FittedMethod out;
  out.name = method;
  out.backbone = backbone;
  out.predictor = std::make_shared<DffPredictor>(base.predictor, std::move(r.net));
  out.report = std::move(r.report);
  return out;
}

MethodEvaluation evaluate_method(const FittedMethod& fitted, const Dataset& test,
                                 const DecisionOracle& oracle,
                                 const std::vector<CostVector>* backbone_preds) {
  MethodEvaluation ev;
  const std::vector<CostVector> truth = test.cost_vectors();
  if (fitted.decision) {
    std::vector<std::vector<double>> decisions(test.size(), *fitted.decision);
    ev.ndr = summarize_decisions(oracle, truth, decisions).normalized();
    ev.mse = kNaN;
    ev.mse_ceiling = kNaN;
    return ev;
  }
  if (!fitted.predictor) throw Error(ErrorKind::kInternal, "method has no predictor");
  const auto* tuned = dynamic_cast<const DffPredictor*>(fitted.predictor.get());
  if (tuned) {
    std::vector<CostVector> local;
    if (!backbone_preds) {
      local = predict_all(*tuned->backbone(), test);
      backbone_preds = &local;
    }
    ev.predictions.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      ev.predictions.push_back(tuned->correct(test[i].x, (*backbone_preds)[i]));
    }
    const double eps = tuned->net().epsilon();
    ev.bounds = bound_report(ev.predictions, *backbone_preds, truth, eps);
    ev.mse_ceiling = mse_ceiling(*backbone_preds, truth, eps);
  } else {
    ev.predictions = predict_all(*fitted.predictor, test);
    ev.mse_ceiling = kNaN;
  }
  ev.ndr = summarize_regret(oracle, truth, ev.predictions).normalized();
  ev.mse = batch_mse(ev.predictions, truth);
  return ev;
}

// ---------------------------------------------------------------------------

namespace {

/// Runs `task(i)` for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots by the task.
template <typename Task>
void parallel_for(std::size_t n, std::size_t workers, Task task) {
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct SeedOutcome {
  std::vector<CellResult> cells;  // one per configured method
  std::map<std::string, std::vector<CostVector>> predictions;
  std::vector<CostVector> truth;
  std::vector<std::pair<std::string, BoundReport>> bounds;
};

SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedOutcome out;
  for (const auto& m : config.methods) {
    CellResult cell;
    cell.method = m;
    cell.seed = seed;
    out.cells.push_back(cell);
  }
  std::unique_ptr<BenchmarkData> data;
  std::unique_ptr<MethodFitter> fitter;
  try {
    data = std::make_unique<BenchmarkData>(generate_benchmark(config, seed));
    fitter = std::make_unique<MethodFitter>(config, *data, seed);
  } catch (const std::exception& e) {
    for (auto& cell : out.cells) cell.error = std::string("data generation: ") + e.what();
    return out;
  }
  out.truth = data->test.cost_vectors();
  std::map<std::string, std::vector<CostVector>> test_preds;

  for (auto& cell : out.cells) {
    try {
      const FittedMethod& fitted = fitter->fit(cell.method);
      const std::vector<CostVector>* base_preds = nullptr;
      if (!fitted.backbone.empty()) {
        auto it = test_preds.find(fitted.backbone);
        if (it == test_preds.end()) {
          const FittedMethod& base = fitter->fit(fitted.backbone);
          it = test_preds.emplace(fitted.backbone, predict_all(*base.predictor, data->test)).first;
        }
        base_preds = &it->second;
      }
      MethodEvaluation ev = evaluate_method(fitted, data->test, *data->oracle, base_preds);
      cell.ok = true;
      cell.ndr = ev.ndr;
      cell.mse = ev.mse;
      cell.mse_ceiling = ev.mse_ceiling;
      if (ev.bounds) {
        cell.has_bounds = true;
        cell.trust_violations = ev.bounds->trust_violations;
        cell.cosine_violations = ev.bounds->cosine_violations;
        cell.rmse_violations = ev.bounds->rmse_violations;
        out.bounds.emplace_back(cell.method, std::move(*ev.bounds));
      }
      if (!ev.predictions.empty()) {
        out.predictions[cell.method] = ev.predictions;
        test_preds.emplace(cell.method, std::move(ev.predictions));
      }
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  }
  return out;
}

void write_bounds(const std::filesystem::path& path, const std::vector<SeedOutcome>& outcomes,
                  const std::vector<std::uint64_t>& seeds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,seed,sample,rmse_backbone,rmse_corrected,increment,bound,cosine,cosine_bound,"
         "trust_ratio,rmse_ok,cosine_ok,trust_ok\n";
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    for (const auto& [method, rep] : outcomes[k].bounds) {
      for (std::size_t i = 0; i < rep.samples.size(); ++i) {
        const SampleBound& s = rep.samples[i];
        out << method << ',' << seeds[k] << ',' << i << ',' << format_double(s.rmse_backbone) << ','
            << format_double(s.rmse_corrected) << ',' << format_double(s.increment) << ','
            << format_double(s.bound) << ',' << (s.cosine_checked ? format_double(s.cosine) : "")
            << ',' << (s.cosine_checked ? format_double(s.cosine_bound) : "") << ','
            << format_double(s.trust_ratio) << ',' << (s.rmse_ok ? 1 : 0) << ','
            << (s.cosine_ok ? 1 : 0) << ',' << (s.trust_ok ? 1 : 0) << '\n';
      }
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<SeedOutcome> outcomes(config.seeds.size());
  parallel_for(config.seeds.size(), config.workers,
               [&](std::size_t k) { outcomes[k] = run_seed(config, config.seeds[k]); });

  ExperimentReport report;
  report.config = config.to_json();
  report.benchmark = benchmark_name(config.benchmark);
  report.variant = config.variant;
  report.epsilon = config.epsilon;
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    for (const auto& outcome : outcomes) report.cells.push_back(outcome.cells[m]);
  }
  report.aggregates = aggregate_cells(config.methods, report.cells);

  std::map<std::string, std::vector<CostVector>> pooled;
  std::vector<CostVector> truth;
  for (const auto& outcome : outcomes) {
    truth.insert(truth.end(), outcome.truth.begin(), outcome.truth.end());
    for (const auto& [method, preds] : outcome.predictions) {
      auto& dst = pooled[method];
      dst.insert(dst.end(), preds.begin(), preds.end());
    }
  }

  const std::filesystem::path out_dir = config.out_dir;
  std::filesystem::create_directories(out_dir);
  std::optional<DistributionReport> dist;
  if (!truth.empty()) {
    dist = distribution_report(pooled, truth, config.bins);
    report.wasserstein = dist->wasserstein;
  }
  write_text_file(out_dir / "report.csv", report.to_csv());
  write_text_file(out_dir / "report.json", report.to_json().dump(2) + "\n");
  if (dist) {
    write_histogram_csv(out_dir / "hist_truth.csv", dist->truth);
    for (const auto& [method, hist] : dist->methods) {
      write_histogram_csv(out_dir / ("hist_" + method + ".csv"), hist);
    }
    std::string csv = "method,wasserstein\n";
    for (const auto& [method, w] : dist->wasserstein) csv += method + "," + format_double(w) + "\n";
    write_text_file(out_dir / "distribution.csv", csv);
  }
  write_bounds(out_dir / "bounds.csv", outcomes, config.seeds);
  write_manifest(out_dir, "bench", config);
  return report;
}

// ---------------------------------------------------------------------------

SweepResult epsilon_sweep(const ExperimentConfig& input) {
  ExperimentConfig config = input;
  config.methods = {config.dff_backbone, "dff"};
  config.validate();

  std::vector<std::vector<SweepRow>> per_seed(config.seeds.size());
  parallel_for(config.seeds.size(), config.workers, [&](std::size_t k) {
    const std::uint64_t seed = config.seeds[k];
    auto& rows = per_seed[k];
    for (double eps : config.eps_grid) {
      SweepRow row;
      row.epsilon = eps;
      row.seed = seed;
      rows.push_back(row);
    }
    try {
      const BenchmarkData data = generate_benchmark(config, seed);
      MethodFitter fitter(config, data, seed);
      const FittedMethod& base = fitter.fit(config.dff_backbone);
      const MethodEvaluation base_ev = evaluate_method(base, data.test, *data.oracle);
      for (auto& row : rows) {
        try {
          fitter.set_epsilon(row.epsilon);
          const FittedMethod& tuned = fitter.fit("dff");
          const MethodEvaluation ev =
              evaluate_method(tuned, data.test, *data.oracle, &base_ev.predictions);
          row.ok = true;
          row.ndr = ev.ndr;
          row.mse = ev.mse;
          row.backbone_ndr = base_ev.ndr;
          row.backbone_mse = base_ev.mse;
          row.mse_ceiling = ev.mse_ceiling;
          row.trust_violations = ev.bounds ? ev.bounds->trust_violations : 0;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (auto& row : rows) row.error = e.what();
    }
  });

  SweepResult result;
  for (std::size_t e = 0; e < config.eps_grid.size(); ++e) {
    SweepSummaryRow summary;
    summary.epsilon = config.eps_grid[e];
    for (const auto& rows : per_seed) {
      const SweepRow& row = rows[e];
      result.rows.push_back(row);
      if (!row.ok) continue;
      ++summary.n;
      summary.ndr_mean += row.ndr;
      summary.mse_mean += row.mse;
      summary.backbone_ndr_mean += row.backbone_ndr;
      summary.backbone_mse_mean += row.backbone_mse;
    }
    if (summary.n) {
      const double n = static_cast<double>(summary.n);
      summary.ndr_mean /= n;
      summary.mse_mean /= n;
      summary.backbone_ndr_mean /= n;
      summary.backbone_mse_mean /= n;
    }
    result.summary.push_back(summary);
  }

  const std::filesystem::path out_dir = config.out_dir;
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "sweep.csv", result.to_csv());
  write_text_file(out_dir / "sweep_summary.csv", result.summary_csv());
  write_manifest(out_dir, "sweep-eps", config);
  return result;
}

}  // namespace dff
