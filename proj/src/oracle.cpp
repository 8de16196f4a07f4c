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

#include "dff/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "dff/error.hpp"

namespace dff {

OracleSolution DecisionOracle::solve_canonical(std::span<const double> k) const {
  if (sense() == ProblemSense::kMinimize) return solve(k);
  // min k^T w == -max (-k)^T w
  std::vector<double> native(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) native[i] = -k[i];
  OracleSolution sol = solve(native);
  sol.objective = dot(k, sol.w);
  return sol;
}

void DecisionOracle::check_dim(std::span<const double> c) const {
  if (c.size() != dim()) {
    throw DataError(kind() + " oracle expects a cost vector of length " +
                    std::to_string(dim()) + ", got " + std::to_string(c.size()));
  }
  if (!all_finite(c)) throw DataError(kind() + " oracle received non-finite costs");
}

// ---------------------------------------------------------------------------

GridGraph::GridGraph(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1 || rows * cols < 2) {
    throw DataError("grid needs at least two nodes");
  }
  out_.resize(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int node = r * cols + c;
      if (c + 1 < cols) {
        out_[node].push_back(static_cast<int>(edges_.size()));
        edges_.push_back({node, node + 1});
      }
      if (r + 1 < rows) {
        out_[node].push_back(static_cast<int>(edges_.size()));
        edges_.push_back({node, node + cols});
      }
    }
  }
}

OracleSolution GridShortestPathOracle::solve(std::span<const double> c) const {
  check_dim(c);
  const int n = graph_.num_nodes();
  // cost-to-sink and chosen successor edge; node ids are already topological
  std::vector<double> to_sink(n, std::numeric_limits<double>::infinity());
  std::vector<int> next_edge(n, -1);
  to_sink[graph_.sink()] = 0.0;
  for (int v = n - 2; v >= 0; --v) {
    for (int e : graph_.out_edges(v)) {
      const double value = c[e] + to_sink[graph_.edges()[e].to];
      if (value < to_sink[v]) {
        to_sink[v] = value;
        next_edge[v] = e;
      }
    }
  }
  OracleSolution sol;
  sol.w.assign(dim(), 0.0);
  int v = graph_.source();
  int hops = 0;
  while (v != graph_.sink()) {
    const int e = next_edge[v];
    sol.w[e] = 1.0;
    v = graph_.edges()[e].to;
    ++hops;
  }
  sol.objective = dot(c, sol.w);
  sol.optimal = true;
  sol.diagnostics["path_edges"] = hops;
  return sol;
}

nlohmann::ordered_json GridShortestPathOracle::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "grid";
  j["rows"] = graph_.rows();
  j["cols"] = graph_.cols();
  return j;
}

// ---------------------------------------------------------------------------

void AllocationInstance::validate() const {
  if (caps.empty()) throw DataError("allocation instance needs at least one city");
  for (double u : caps) {
    if (!(u > 0.0) || !std::isfinite(u)) throw DataError("allocation caps must be positive");
  }
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    throw DataError("allocation budget must be positive");
  }
}

bool AllocationInstance::budget_vacuous() const {
  return budget >= std::accumulate(caps.begin(), caps.end(), 0.0);
}

AllocationOracle::AllocationOracle(AllocationInstance instance) : instance_(std::move(instance)) {
  instance_.validate();
}

OracleSolution AllocationOracle::solve(std::span<const double> c) const {
  check_dim(c);
  const std::size_t k = dim();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&c](std::size_t a, std::size_t b) { return c[a] > c[b]; });

  OracleSolution sol;
  sol.w.assign(k, 0.0);
  double remaining = instance_.budget;
  for (std::size_t j : order) {
    if (c[j] <= 0.0 || remaining <= 0.0) break;
    const double take = std::min(instance_.caps[j], remaining);
    sol.w[j] = take;
    remaining -= take;
  }
  sol.objective = dot(c, sol.w);
  sol.optimal = true;
  double out_of_range = 0;
  for (double v : c) out_of_range += (v < 0.0 || v > 1.0) ? 1 : 0;
  sol.diagnostics["rates_out_of_range"] = out_of_range;
  sol.diagnostics["budget_vacuous"] = instance_.budget_vacuous() ? 1.0 : 0.0;
  return sol;
}

std::vector<double> AllocationOracle::equal_split() const {
  const std::size_t k = dim();
  std::vector<double> w(k, 0.0);
  std::vector<bool> saturated(k, false);
  double remaining = instance_.budget;
  std::size_t open = k;
  // Each round raises all unsaturated cities by the same amount.
  while (open > 0 && remaining > 0.0) {
    const double level = remaining / static_cast<double>(open);
    double step = level;
    for (std::size_t j = 0; j < k; ++j) {
      if (!saturated[j]) step = std::min(step, instance_.caps[j] - w[j]);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (saturated[j]) continue;
      const double room = instance_.caps[j] - w[j];
      if (room <= step) {
        w[j] = instance_.caps[j];
        remaining -= room;
        saturated[j] = true;
        --open;
      } else {
        w[j] += step;
        remaining -= step;
      }
    }
    if (step == level) break;
  }
  return w;
}

nlohmann::ordered_json AllocationOracle::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "allocation";
  j["caps"] = instance_.caps;
  j["budget"] = instance_.budget;
  return j;
}

// ---------------------------------------------------------------------------

double decision_regret_of(const DecisionOracle& oracle, std::span<const double> c,
                          std::span<const double> w) {
  const double s = sense_sign(oracle.sense());
  const OracleSolution best = oracle.solve(c);
  // Exact oracles can still disagree in the last bits; iterative ones up to
  // their tolerance. Either way regret is reported as nonnegative.
  return std::max(0.0, s * (dot(c, w) - best.objective));
}

double decision_regret(const DecisionOracle& oracle, std::span<const double> c,
                       std::span<const double> c_hat) {
  if (c_hat.size() != oracle.dim()) {
    throw DataError("prediction has length " + std::to_string(c_hat.size()) + ", oracle expects " +
                    std::to_string(oracle.dim()));
  }
  const OracleSolution decided = oracle.solve(c_hat);
  return decision_regret_of(oracle, c, decided.w);
}

double RegretSummary::normalized() const {
  if (total_abs_optimal < 1e-12) throw DataError("degenerate normalization");
  return total_regret / total_abs_optimal;
}

RegretSummary summarize_regret(const DecisionOracle& oracle, std::span<const CostVector> truth,
                               std::span<const CostVector> predictions) {
  std::vector<OracleSolution> optimal;
  optimal.reserve(truth.size());
  for (const auto& c : truth) optimal.push_back(oracle.solve(c));
  return summarize_regret(oracle, truth, optimal, predictions);
}

RegretSummary summarize_regret(const DecisionOracle& oracle, std::span<const CostVector> truth,
                               std::span<const OracleSolution> optimal,
                               std::span<const CostVector> predictions) {
  if (truth.size() != predictions.size() || truth.size() != optimal.size()) {
    throw DataError("expected one prediction per sample (" + std::to_string(truth.size()) +
                    " samples, " + std::to_string(predictions.size()) + " predictions)");
  }
  std::vector<std::vector<double>> decisions;
  decisions.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != oracle.dim()) {
      throw DataError("prediction " + std::to_string(i) + " has the wrong length");
    }
    decisions.push_back(oracle.solve(predictions[i]).w);
  }
  const double s = sense_sign(oracle.sense());
  RegretSummary out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.total_regret += std::max(0.0, s * (dot(truth[i], decisions[i]) - optimal[i].objective));
    out.total_abs_optimal += std::abs(optimal[i].objective);
    ++out.n;
  }
  return out;
}

RegretSummary summarize_decisions(const DecisionOracle& oracle, std::span<const CostVector> truth,
                                  std::span<const std::vector<double>> decisions) {
  if (truth.size() != decisions.size()) throw DataError("expected one decision per sample");
  const double s = sense_sign(oracle.sense());
  RegretSummary out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (decisions[i].size() != oracle.dim()) {
      throw DataError("decision " + std::to_string(i) + " has the wrong length");
    }
    const OracleSolution best = oracle.solve(truth[i]);
    out.total_regret += std::max(0.0, s * (dot(truth[i], decisions[i]) - best.objective));
    out.total_abs_optimal += std::abs(best.objective);
    ++out.n;
  }
  return out;
}

double average_decision_regret(const DecisionOracle& oracle, const Dataset& dataset,
                               std::span<const CostVector> predictions) {
  const auto truth = dataset.cost_vectors();
  return summarize_regret(oracle, truth, predictions).average();
}

double normalized_decision_regret(const DecisionOracle& oracle, const Dataset& dataset,
                                  std::span<const CostVector> predictions) {
  const auto truth = dataset.cost_vectors();
  return summarize_regret(oracle, truth, predictions).normalized();
}

// ---------------------------------------------------------------------------

std::unique_ptr<DecisionOracle> oracle_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "grid") {
      return std::make_unique<GridShortestPathOracle>(
          GridGraph(j.at("rows").get<int>(), j.at("cols").get<int>()));
    }
    if (kind == "allocation") {
      AllocationInstance inst{j.at("caps").get<std::vector<double>>(),
                              j.at("budget").get<double>()};
      return std::make_unique<AllocationOracle>(std::move(inst));
    }
    if (kind == "portfolio") {
      const auto rows = j.at("sigma").get<std::vector<std::vector<double>>>();
      PortfolioInstance inst;
      const auto n = static_cast<Eigen::Index>(rows.size());
      inst.sigma.resize(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != n) {
          throw DataError("portfolio sigma must be square");
        }
        for (Eigen::Index c = 0; c < n; ++c) inst.sigma(r, c) = rows[r][c];
      }
      inst.gamma = j.at("gamma").get<double>();
      return std::make_unique<PortfolioOracle>(std::move(inst));
    }
    throw DataError("unknown instance kind '" + kind + "' (expected grid, portfolio, allocation)");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed instance: ") + e.what());
  }
}

std::unique_ptr<DecisionOracle> load_oracle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return oracle_from_json(j);
}

void save_oracle(const std::filesystem::path& path, const DecisionOracle& oracle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << oracle.to_json().dump(2) << '\n';
}

nlohmann::ordered_json solution_to_json(const OracleSolution& solution) {
  nlohmann::ordered_json j;
  j["w"] = solution.w;
  j["objective"] = solution.objective;
  j["optimal"] = solution.optimal;
  nlohmann::ordered_json diag = nlohmann::ordered_json::object();
  for (const auto& [k, v] : solution.diagnostics) diag[k] = v;
  j["diagnostics"] = diag;
  return j;
}

}  // namespace dff
