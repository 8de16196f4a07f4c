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

#include "dff/dff.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dff/correction.hpp"
#include "dff/error.hpp"
#include "dff/experiment.hpp"
#include "dff/oracle.hpp"
#include "dff/training.hpp"
#include "dff/version.hpp"
#include "json.hpp"

struct dff_config {
  dff::ExperimentConfig value;
};

struct dff_oracle {
  std::unique_ptr<dff::DecisionOracle> value;
};

struct dff_dataset {
  dff::Dataset value;
};

struct dff_correction {
  dff::CorrectionNet value;
};

namespace {

thread_local std::string g_last_error;

dff_status status_of(dff::ErrorKind kind) {
  switch (kind) {
    case dff::ErrorKind::kUsage: return DFF_E_USAGE;
    case dff::ErrorKind::kData: return DFF_E_DATA;
    case dff::ErrorKind::kSolver: return DFF_E_SOLVER;
    case dff::ErrorKind::kIo: return DFF_E_IO;
    case dff::ErrorKind::kInternal: return DFF_E_INTERNAL;
  }
  return DFF_E_INTERNAL;
}

template <typename F>
dff_status guard(F&& body) {
  g_last_error.clear();
  try {
    body();
    return DFF_OK;
  } catch (const dff::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return DFF_E_DATA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DFF_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DFF_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DFF_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw dff::UsageError(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& text) {
  if (out) *out = dup_string(text);
}

nlohmann::ordered_json number(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool looks_numeric(const std::string& s) {
  try {
    dff::parse_double(s);
    return true;
  } catch (const dff::Error&) {
    return false;
  }
}

/// Rows of costs from a CSV. A header is optional; when present only c_*
/// columns are used if any exist.
std::vector<dff::CostVector> read_cost_rows(const char* path) {
  std::ifstream in(path);
  if (!in) throw dff::IoError(std::string("cannot open ") + path);
  std::vector<dff::CostVector> rows;
  std::vector<std::size_t> columns;
  bool first = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    const auto cells = split_csv_line(line);
    if (first) {
      first = false;
      const bool header = !cells.empty() && !looks_numeric(cells.front());
      if (header) {
        for (std::size_t j = 0; j < cells.size(); ++j) {
          if (cells[j].rfind("c_", 0) == 0) columns.push_back(j);
        }
        if (columns.empty()) {
          for (std::size_t j = 0; j < cells.size(); ++j) columns.push_back(j);
        }
        continue;
      }
      for (std::size_t j = 0; j < cells.size(); ++j) columns.push_back(j);
    }
    dff::CostVector c;
    c.reserve(columns.size());
    for (std::size_t j : columns) {
      if (j >= cells.size()) {
        throw dff::DataError(std::string(path) + ":" + std::to_string(line_no) + ": short row");
      }
      try {
        c.push_back(dff::parse_double(cells[j]));
      } catch (const dff::Error&) {
        throw dff::DataError(std::string(path) + ":" + std::to_string(line_no) +
                             ": bad number '" + cells[j] + "'");
      }
    }
    rows.push_back(std::move(c));
  }
  return rows;
}

dff::ExperimentConfig config_for_data(const dff::ExperimentConfig& base,
                                      const dff::BenchmarkData& data) {
  dff::ExperimentConfig c = base;
  c.benchmark = data.benchmark;
  c.data.p = data.train.p();
  c.data.n_train = data.train.size();
  c.data.n_test = data.test.size();
  return c;
}

}  // namespace

extern "C" {

const char* dff_version(void) { return dff::kVersion; }

const char* dff_last_error(void) { return g_last_error.c_str(); }

void dff_string_free(char* s) { std::free(s); }

// ---- configuration ----------------------------------------------------------

dff_status dff_config_new(dff_config** out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = new dff_config{};
  });
}

dff_status dff_config_load(const char* path, dff_config** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto cfg = std::make_unique<dff_config>();
    cfg->value = dff::load_config(path);
    *out = cfg.release();
  });
}

dff_status dff_config_set(dff_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg && key && value, "null argument");
    dff::apply_setting(cfg->value, key, value);
  });
}

dff_status dff_config_validate(const dff_config* cfg) {
  return guard([&] {
    require(cfg != nullptr, "null config");
    cfg->value.validate();
  });
}

dff_status dff_config_dump(const dff_config* cfg, char** out_json) {
  return guard([&] {
    require(cfg && out_json, "null argument");
    nlohmann::ordered_json j = cfg->value.to_json();
    j["workers"] = cfg->value.workers;
    j["out"] = cfg->value.out_dir;
    j["hash"] = cfg->value.hash();
    emit(out_json, j.dump(2));
  });
}

void dff_config_free(dff_config* cfg) { delete cfg; }

// ---- commands -----------------------------------------------------------------

dff_status dff_datagen(const dff_config* cfg, uint64_t seed, const char* out_dir,
                       char** out_json) {
  return guard([&] {
    require(cfg && out_dir, "null argument");
    cfg->value.validate();
    const dff::BenchmarkData data = dff::generate_benchmark(cfg->value, seed);
    dff::save_benchmark(out_dir, data);
    nlohmann::ordered_json j;
    j["benchmark"] = dff::benchmark_name(data.benchmark);
    j["seed"] = seed;
    j["p"] = data.train.p();
    j["d"] = data.train.d();
    j["n_train"] = data.train.size();
    j["n_test"] = data.test.size();
    j["out"] = out_dir;
    emit(out_json, j.dump(2));
  });
}

dff_status dff_solve(const char* instance_path, const char* costs_csv, char** out_json) {
  return guard([&] {
    require(instance_path && costs_csv && out_json, "null argument");
    const auto oracle = dff::load_oracle(instance_path);
    const auto rows = read_cost_rows(costs_csv);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != oracle->dim()) {
        throw dff::DataError("row " + std::to_string(i) + " has " +
                             std::to_string(rows[i].size()) + " costs, instance needs " +
                             std::to_string(oracle->dim()));
      }
      j.push_back(dff::solution_to_json(oracle->solve(rows[i])));
    }
    emit(out_json, j.dump(2));
  });
}

dff_status dff_train(const dff_config* cfg, const char* method, uint64_t seed,
                     const char* data_dir, const char* model_dir, char** out_json) {
  return guard([&] {
    require(cfg && method && data_dir && model_dir, "null argument");
    const dff::BenchmarkData data = dff::load_benchmark(data_dir);
    dff::ExperimentConfig config = config_for_data(cfg->value, data);
    config.methods = {method};
    if (std::string(method) == "dff") config.methods.insert(config.methods.begin(), config.dff_backbone);
    config.validate();
    dff::MethodFitter fitter(config, data, seed);
    const dff::FittedMethod& fitted = fitter.fit(method);
    dff::save_model(model_dir, fitted, data);
    nlohmann::ordered_json j;
    j["method"] = method;
    j["seed"] = seed;
    j["n_train"] = fitter.train().size();
    j["n_val"] = fitter.val().size();
    if (!fitted.backbone.empty()) {
      j["backbone"] = fitted.backbone;
      j["epsilon"] = fitter.epsilon();
    }
    if (fitted.report) j["report"] = fitted.report->to_json(false);
    j["model"] = model_dir;
    emit(out_json, j.dump(2));
  });
}

dff_status dff_eval(const char* data_dir, const char* model_dir, char** out_json) {
  return guard([&] {
    require(data_dir && model_dir && out_json, "null argument");
    const dff::BenchmarkData data = dff::load_benchmark(data_dir);
    const dff::LoadedModel model = dff::load_model(model_dir);
    dff::FittedMethod fitted;
    fitted.name = model.method;
    fitted.predictor = model.predictor;
    fitted.decision = model.decision;
    if (model.predictor) {
      if (model.predictor->input_dim() != data.test.p() ||
          model.predictor->output_dim() != data.test.d()) {
        throw dff::DataError("model dimensions do not match the data");
      }
    } else if (model.decision && model.decision->size() != data.test.d()) {
      throw dff::DataError("decision width does not match the data");
    }
    std::vector<dff::CostVector> backbone_preds;
    if (model.backbone) backbone_preds = dff::predict_all(*model.backbone, data.test);
    const dff::MethodEvaluation ev = dff::evaluate_method(
        fitted, data.test, *data.oracle, model.backbone ? &backbone_preds : nullptr);
    nlohmann::ordered_json j;
    j["method"] = model.method;
    j["n_test"] = data.test.size();
    j["ndr"] = number(ev.ndr);
    j["mse"] = number(ev.mse);
    if (model.backbone) {
      const auto truth = data.test.cost_vectors();
      j["epsilon"] = model.epsilon;
      j["backbone_ndr"] = number(dff::summarize_regret(*data.oracle, truth, backbone_preds).normalized());
      j["backbone_mse"] = number(dff::batch_mse(backbone_preds, truth));
      j["mse_ceiling"] = number(ev.mse_ceiling);
      if (ev.bounds) {
        j["trust_violations"] = ev.bounds->trust_violations;
        j["cosine_violations"] = ev.bounds->cosine_violations;
        j["rmse_violations"] = ev.bounds->rmse_violations;
      }
    }
    emit(out_json, j.dump(2));
  });
}

dff_status dff_bench(const dff_config* cfg, char** out_table) {
  return guard([&] {
    require(cfg != nullptr, "null config");
    const dff::ExperimentReport report = dff::run_experiment(cfg->value);
    emit(out_table, report.to_table());
  });
}

dff_status dff_sweep_eps(const dff_config* cfg, char** out_summary) {
  return guard([&] {
    require(cfg != nullptr, "null config");
    const dff::SweepResult result = dff::epsilon_sweep(cfg->value);
    emit(out_summary, result.summary_csv());
  });
}

dff_status dff_report_render(const char* report_path, const char* format, char** out_text) {
  return guard([&] {
    require(report_path && format && out_text, "null argument");
    const std::string f = format;
    if (f != "json" && f != "csv" && f != "table") {
      throw dff::UsageError("unknown report format '" + f + "' (json, csv, table)");
    }
    const dff::ExperimentReport report = dff::load_report(report_path);
    if (f == "json") emit(out_text, report.to_json().dump(2) + "\n");
    else if (f == "csv") emit(out_text, report.to_csv());
    else emit(out_text, report.to_table());
  });
}

// ---- oracles ------------------------------------------------------------------

dff_status dff_oracle_from_json(const char* json, dff_oracle** out) {
  return guard([&] {
    require(json && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<dff_oracle>();
    h->value = dff::oracle_from_json(nlohmann::json::parse(json));
    *out = h.release();
  });
}

dff_status dff_oracle_load(const char* path, dff_oracle** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<dff_oracle>();
    h->value = dff::load_oracle(path);
    *out = h.release();
  });
}

size_t dff_oracle_dim(const dff_oracle* oracle) { return oracle ? oracle->value->dim() : 0; }

int dff_oracle_sense(const dff_oracle* oracle) {
  if (!oracle) return 0;
  return oracle->value->sense() == dff::ProblemSense::kMinimize ? 1 : -1;
}

dff_status dff_oracle_solve(const dff_oracle* oracle, const double* c, size_t n, double* w_out,
                            double* objective_out) {
  return guard([&] {
    require(oracle && c, "null argument");
    const auto sol = oracle->value->solve({c, n});
    if (w_out) std::copy(sol.w.begin(), sol.w.end(), w_out);
    if (objective_out) *objective_out = sol.objective;
  });
}

dff_status dff_oracle_regret(const dff_oracle* oracle, const double* c, const double* c_hat,
                             size_t n, double* out) {
  return guard([&] {
    require(oracle && c && c_hat && out, "null argument");
    *out = dff::decision_regret(*oracle->value, {c, n}, {c_hat, n});
  });
}

dff_status dff_oracle_spo_plus(const dff_oracle* oracle, const double* c_tilde, const double* c,
                               size_t n, double* loss_out, double* grad_out) {
  return guard([&] {
    require(oracle && c_tilde && c && loss_out, "null argument");
    const auto r = dff::spo_plus(*oracle->value, {c_tilde, n}, {c, n});
    *loss_out = r.loss;
    if (grad_out) std::copy(r.gradient.begin(), r.gradient.end(), grad_out);
  });
}

void dff_oracle_free(dff_oracle* oracle) { delete oracle; }

// ---- datasets -----------------------------------------------------------------

dff_status dff_dataset_read(const char* csv_path, dff_dataset** out) {
  return guard([&] {
    require(csv_path && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<dff_dataset>();
    h->value = dff::read_dataset_csv(csv_path);
    *out = h.release();
  });
}

size_t dff_dataset_size(const dff_dataset* ds) { return ds ? ds->value.size() : 0; }
size_t dff_dataset_p(const dff_dataset* ds) { return ds ? ds->value.p() : 0; }
size_t dff_dataset_d(const dff_dataset* ds) { return ds ? ds->value.d() : 0; }

dff_status dff_dataset_sample(const dff_dataset* ds, size_t i, double* x, double* c) {
  return guard([&] {
    require(ds != nullptr, "null dataset");
    if (i >= ds->value.size()) throw dff::UsageError("sample index out of range");
    const dff::Sample& s = ds->value[i];
    if (x) std::copy(s.x.begin(), s.x.end(), x);
    if (c) std::copy(s.c.begin(), s.c.end(), c);
  });
}

void dff_dataset_free(dff_dataset* ds) { delete ds; }

// ---- correction layer -----------------------------------------------------------

dff_status dff_correction_new(size_t p, size_t d, double epsilon, uint64_t seed,
                              dff_correction** out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = nullptr;
    dff::CorrectionConfig config;
    config.p = p;
    config.d = d;
    config.epsilon = epsilon;
    auto h = std::make_unique<dff_correction>();
    h->value = dff::CorrectionNet(config, seed);
    *out = h.release();
  });
}

dff_status dff_correction_load(const char* path, dff_correction** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<dff_correction>();
    h->value = dff::CorrectionNet::load(path);
    *out = h.release();
  });
}

dff_status dff_correction_save(const dff_correction* net, const char* path) {
  return guard([&] {
    require(net && path, "null argument");
    net->value.save(path);
  });
}

size_t dff_correction_num_params(const dff_correction* net) {
  return net ? net->value.num_params() : 0;
}

dff_status dff_correction_get_params(const dff_correction* net, double* out, size_t n) {
  return guard([&] {
    require(net && out, "null argument");
    const auto theta = net->value.params();
    if (n != theta.size()) throw dff::UsageError("parameter buffer has the wrong length");
    std::copy(theta.begin(), theta.end(), out);
  });
}

dff_status dff_correction_set_params(dff_correction* net, const double* theta, size_t n) {
  return guard([&] {
    require(net && theta, "null argument");
    net->value.set_params({theta, n});
  });
}

dff_status dff_correction_forward(const dff_correction* net, const double* x, size_t p,
                                  const double* c_hat, size_t d, double* c_tilde_out) {
  return guard([&] {
    require(net && x && c_hat && c_tilde_out, "null argument");
    const auto out = net->value.forward({x, p}, {c_hat, d});
    std::copy(out.begin(), out.end(), c_tilde_out);
  });
}

void dff_correction_free(dff_correction* net) { delete net; }

}  // extern "C"
