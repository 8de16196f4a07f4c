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

// Command-line front end. Talks to the library only through dff.h.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dff/dff.h"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kSolver = 3 };

int exit_code(dff_status s) {
  switch (s) {
    case DFF_OK: return kOk;
    case DFF_E_USAGE: return kUsage;
    case DFF_E_DATA:
    case DFF_E_IO: return kData;
    default: return kSolver;
  }
}

struct Failure {
  dff_status status;
};

void check(dff_status s) {
  if (s != DFF_OK) throw Failure{s};
}

// Prints and releases a string returned by the library.
void print_owned(char* text) {
  if (!text) return;
  std::fputs(text, stdout);
  const std::size_t n = std::char_traits<char>::length(text);
  if (n == 0 || text[n - 1] != '\n') std::fputc('\n', stdout);
  dff_string_free(text);
}

class Config {
 public:
  Config() { check(dff_config_new(&cfg_)); }
  ~Config() { dff_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void load(const std::string& path) {
    dff_config* loaded = nullptr;
    check(dff_config_load(path.c_str(), &loaded));
    dff_config_free(cfg_);
    cfg_ = loaded;
  }
  void set(const std::string& key, const std::string& value) {
    check(dff_config_set(cfg_, key.c_str(), value.c_str()));
  }
  dff_config* get() const { return cfg_; }

 private:
  dff_config* cfg_ = nullptr;
};

// Flags shared by the experiment subcommands. Applied after the config file,
// so flags win.
struct Overrides {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> benchmark;
  std::optional<int> variant;
  std::vector<std::string> methods;
  std::optional<std::string> seeds;
  std::optional<std::string> epsilon;
  std::optional<std::string> backbone;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  std::optional<int> rows;
  std::optional<int> cols;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  std::optional<std::size_t> epochs;

  void add_to(CLI::App* cmd, bool with_out = true) {
    cmd->add_option("-c,--config", config, "Config file ([experiment], [data], [train], [backbone])");
    cmd->add_option("--set", sets, "Override a setting: section.key=value (repeatable)");
    cmd->add_option("--benchmark", benchmark, "grid_flow, portfolio, allocation or allocation_sim");
    cmd->add_option("--variant", variant, "Synthetic data variant (1 or 2)");
    cmd->add_option("--method", methods, "Method name (repeatable or comma separated)")
        ->delimiter(',');
    cmd->add_option("--seeds", seeds, "Seed count N (0..N-1) or a comma list");
    cmd->add_option("--epsilon", epsilon, "Trust-region radius for fine-tuning");
    cmd->add_option("--backbone", backbone, "Backbone method for dff");
    cmd->add_option("--workers", workers, "Parallel workers");
    if (with_out) cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--rows", rows, "Grid rows");
    cmd->add_option("--cols", cols, "Grid columns");
    cmd->add_option("--n-train", n_train, "Training samples per seed");
    cmd->add_option("--n-test", n_test, "Test samples per seed");
    cmd->add_option("--epochs", epochs, "Maximum training epochs");
  }

  void apply(Config& cfg) const {
    if (!config.empty()) cfg.load(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects section.key=value, got '" << s << "'\n";
        throw Failure{DFF_E_USAGE};
      }
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (benchmark) cfg.set("experiment.benchmark", *benchmark);
    if (variant) cfg.set("experiment.variant", std::to_string(*variant));
    if (!methods.empty()) {
      std::string joined;
      for (const auto& m : methods) joined += (joined.empty() ? "" : ",") + m;
      cfg.set("experiment.methods", joined);
    }
    if (seeds) cfg.set("experiment.seeds", *seeds);
    if (epsilon) cfg.set("experiment.epsilon", *epsilon);
    if (backbone) cfg.set("experiment.dff_backbone", *backbone);
    if (workers) cfg.set("experiment.workers", std::to_string(*workers));
    if (out) cfg.set("experiment.out", *out);
    if (rows) cfg.set("data.grid_rows", std::to_string(*rows));
    if (cols) cfg.set("data.grid_cols", std::to_string(*cols));
    if (n_train) cfg.set("data.n_train", std::to_string(*n_train));
    if (n_test) cfg.set("data.n_test", std::to_string(*n_test));
    if (epochs) cfg.set("train.max_epochs", std::to_string(*epochs));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-focused fine-tuning of predict-then-optimize backbones"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dff_version()));

  // datagen
  Overrides gen_flags;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("datagen", "Generate one seed of a benchmark");
  gen_flags.add_to(gen, false);
  gen->add_option("--seed", gen_seed, "Data seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // solve
  std::string solve_instance, solve_costs;
  auto* solve = app.add_subcommand("solve", "Solve an instance for each row of a cost CSV");
  solve->add_option("--instance", solve_instance, "Instance JSON")->required();
  solve->add_option("--costs", solve_costs, "Cost CSV")->required();

  // train
  Overrides train_flags;
  std::string train_data, train_model, train_method = "dff";
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "Fit one method on a generated data directory");
  train_flags.add_to(train, false);
  train->add_option("--data", train_data, "Data directory from datagen")->required();
  train->add_option("--model", train_model, "Model output directory")->required();
  train->add_option("--seed", train_seed, "Training seed");

  // eval
  std::string eval_data, eval_model;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a data directory");
  eval->add_option("--data", eval_data, "Data directory from datagen")->required();
  eval->add_option("--model", eval_model, "Model directory from train")->required();

  // bench
  Overrides bench_flags;
  auto* bench = app.add_subcommand("bench", "Run every configured method over every seed");
  bench_flags.add_to(bench);

  // sweep-eps
  Overrides sweep_flags;
  std::optional<std::string> sweep_grid;
  auto* sweep = app.add_subcommand("sweep-eps", "Fine-tune over a grid of trust-region radii");
  sweep_flags.add_to(sweep);
  sweep->add_option("--grid", sweep_grid, "Comma separated epsilon values");

  // report
  std::string report_path, report_format = "table";
  auto* report = app.add_subcommand("report", "Render a stored report");
  report->add_option("path", report_path, "report.json or its directory")->required();
  report->add_option("--format", report_format, "json, csv or table")
      ->check(CLI::IsMember({"json", "csv", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    char* text = nullptr;
    if (*gen) {
      Config cfg;
      gen_flags.apply(cfg);
      check(dff_datagen(cfg.get(), gen_seed, gen_out.c_str(), &text));
    } else if (*solve) {
      check(dff_solve(solve_instance.c_str(), solve_costs.c_str(), &text));
    } else if (*train) {
      if (train_flags.methods.size() > 1) {
        std::cerr << "error: train fits one method at a time\n";
        return kUsage;
      }
      if (!train_flags.methods.empty()) train_method = train_flags.methods.front();
      Config cfg;
      train_flags.apply(cfg);
      check(dff_train(cfg.get(), train_method.c_str(), train_seed, train_data.c_str(),
                      train_model.c_str(), &text));
    } else if (*eval) {
      check(dff_eval(eval_data.c_str(), eval_model.c_str(), &text));
    } else if (*bench) {
      Config cfg;
      bench_flags.apply(cfg);
      check(dff_bench(cfg.get(), &text));
    } else if (*sweep) {
      Config cfg;
      sweep_flags.apply(cfg);
      if (sweep_grid) cfg.set("experiment.eps_grid", *sweep_grid);
      check(dff_sweep_eps(cfg.get(), &text));
    } else if (*report) {
      check(dff_report_render(report_path.c_str(), report_format.c_str(), &text));
    }
    print_owned(text);
    return kOk;
  } catch (const Failure& f) {
    const char* msg = dff_last_error();
    if (msg && *msg) std::cerr << "error: " << msg << "\n";
    return exit_code(f.status);
  }
}
