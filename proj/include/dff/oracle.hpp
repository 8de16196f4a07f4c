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

// Exact decision oracles for the downstream problems, regret metrics and
// exhaustive verification solvers.

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dff/core.hpp"
#include "json.hpp"

namespace dff {

enum class ProblemSense { kMinimize, kMaximize };

/// +1 for minimization, -1 for maximization. Multiplying native costs by this
/// gives the minimization-canonical costs.
inline double sense_sign(ProblemSense sense) {
  return sense == ProblemSense::kMinimize ? 1.0 : -1.0;
}

struct OracleSolution {
  std::vector<double> w;
  double objective = 0.0;  // c^T w for the costs that were passed in
  bool optimal = false;
  std::map<std::string, double> diagnostics;
};

/// A solvable downstream problem with a linear objective c^T w over a fixed
/// feasible set. Implementations are immutable and safe to share across
/// threads.
class DecisionOracle {
 public:
  virtual ~DecisionOracle() = default;

  virtual std::size_t dim() const = 0;
  virtual ProblemSense sense() const = 0;
  virtual std::string kind() const = 0;
  /// Optimizes c^T w in the oracle's native sense.
  virtual OracleSolution solve(std::span<const double> c) const = 0;
  virtual nlohmann::ordered_json to_json() const = 0;

  /// Solves min_w k^T w where k are minimization-canonical costs. The returned
  /// objective is k^T w.
  OracleSolution solve_canonical(std::span<const double> k) const;

 protected:
  void check_dim(std::span<const double> c) const;
};

// ---------------------------------------------------------------------------
// Shortest path on a right/down grid DAG.

struct GridEdge {
  int from = 0;
  int to = 0;
};

/// rows x cols lattice of nodes numbered row-major. For every node in that
/// order its right edge (if any) is listed before its down edge, so an edge
/// index also orders the edges topologically.
class GridGraph {
 public:
  GridGraph(int rows, int cols);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int num_nodes() const noexcept { return rows_ * cols_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<GridEdge>& edges() const noexcept { return edges_; }
  /// Outgoing edge indices of `node` in increasing order.
  const std::vector<int>& out_edges(int node) const { return out_[node]; }
  int source() const noexcept { return 0; }
  int sink() const noexcept { return num_nodes() - 1; }

 private:
  int rows_;
  int cols_;
  std::vector<GridEdge> edges_;
  std::vector<std::vector<int>> out_;
};

/// Minimum-cost source-to-sink path. Exact dynamic programming over the
/// topological order; among equal-cost paths the lexicographically smallest
/// edge-index sequence wins.
class GridShortestPathOracle final : public DecisionOracle {
 public:
  explicit GridShortestPathOracle(GridGraph graph) : graph_(std::move(graph)) {}

  std::size_t dim() const override { return graph_.num_edges(); }
  ProblemSense sense() const override { return ProblemSense::kMinimize; }
  std::string kind() const override { return "grid"; }
  OracleSolution solve(std::span<const double> c) const override;
  nlohmann::ordered_json to_json() const override;

  const GridGraph& graph() const noexcept { return graph_; }

 private:
  GridGraph graph_;
};

// ---------------------------------------------------------------------------
// Long-only portfolio with a quadratic risk budget.

struct PortfolioInstance {
  Eigen::MatrixXd sigma;
  double gamma = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(sigma.rows()); }
  /// Throws DataError unless sigma is square, symmetric and PSD (eigenvalues
  /// >= -1e-10) and gamma > 0.
  void validate() const;
};

struct PortfolioKkt {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const;
};

/// max c^T w  s.t.  w >= 0, sum(w) = 1, w^T Sigma w <= gamma.
///
/// Bisection on the risk multiplier lambda. Each inner problem
/// max c^T w - lambda w^T Sigma w over the simplex is solved by projected
/// gradient ascent with step 1/L, L = 2 lambda lambda_max(Sigma) + 1, stopping
/// at gradient-mapping norm 1e-8 or 10,000 iterations.
class PortfolioOracle final : public DecisionOracle {
 public:
  explicit PortfolioOracle(PortfolioInstance instance);

  std::size_t dim() const override { return instance_.dim(); }
  ProblemSense sense() const override { return ProblemSense::kMaximize; }
  std::string kind() const override { return "portfolio"; }
  OracleSolution solve(std::span<const double> c) const override;
  nlohmann::ordered_json to_json() const override;

  const PortfolioInstance& instance() const noexcept { return instance_; }
  double max_eigenvalue() const noexcept { return max_eig_; }
  /// Minimum of w^T Sigma w over the simplex (computed lazily per call).
  double minimal_risk() const;
  PortfolioKkt kkt_residuals(std::span<const double> c, std::span<const double> w,
                             double lambda) const;

 private:
  struct InnerResult {
    Eigen::VectorXd w;
    int iterations = 0;
    double mapping_norm = 0.0;
  };
  InnerResult solve_inner(const Eigen::VectorXd& c, double lambda, Eigen::VectorXd w0) const;
  double risk(const Eigen::VectorXd& w) const { return w.dot(instance_.sigma * w); }

  PortfolioInstance instance_;
  double max_eig_ = 0.0;
};

/// Euclidean projection onto {w >= 0, sum(w) = 1}.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

// ---------------------------------------------------------------------------
// Box-capped budget allocation (fractional knapsack with unit weights).

struct AllocationInstance {
  std::vector<double> caps;
  double budget = 0.0;

  std::size_t dim() const { return caps.size(); }
  void validate() const;
  /// True when the budget covers every cap, i.e. the budget row never binds.
  bool budget_vacuous() const;
};

/// max c^T w  s.t.  0 <= w <= caps, sum(w) <= budget. Greedy by descending c,
/// ties to the lowest index; non-positive rates receive nothing.
class AllocationOracle final : public DecisionOracle {
 public:
  explicit AllocationOracle(AllocationInstance instance);

  std::size_t dim() const override { return instance_.dim(); }
  ProblemSense sense() const override { return ProblemSense::kMaximize; }
  std::string kind() const override { return "allocation"; }
  OracleSolution solve(std::span<const double> c) const override;
  nlohmann::ordered_json to_json() const override;

  const AllocationInstance& instance() const noexcept { return instance_; }
  /// Rule-based baseline: water-fill the budget at an equal level across
  /// cities, respecting caps.
  std::vector<double> equal_split() const;

 private:
  AllocationInstance instance_;
};

// ---------------------------------------------------------------------------

/// Exhaustive reference solver for small instances (grid <= 4x4 by path
/// enumeration, portfolio d <= 3 on a 1e-3 simplex lattice, allocation K <= 6
/// by LP vertex enumeration). Throws UsageError above those limits.
OracleSolution brute_force_solve(const DecisionOracle& oracle, std::span<const double> c);

/// Regret of acting on `c_hat` when the truth is `c`; always >= 0.
double decision_regret(const DecisionOracle& oracle, std::span<const double> c,
                       std::span<const double> c_hat);
/// Regret of a fixed decision `w` under true costs `c`.
double decision_regret_of(const DecisionOracle& oracle, std::span<const double> c,
                          std::span<const double> w);

struct RegretSummary {
  double total_regret = 0.0;
  double total_abs_optimal = 0.0;
  std::size_t n = 0;

  double average() const { return n ? total_regret / static_cast<double>(n) : 0.0; }
  /// Throws DataError("degenerate normalization") when the denominator is
  /// below 1e-12.
  double normalized() const;
};

RegretSummary summarize_regret(const DecisionOracle& oracle, std::span<const CostVector> truth,
                               std::span<const CostVector> predictions);
/// Same as above with the optimal solutions for `truth` already computed.
RegretSummary summarize_regret(const DecisionOracle& oracle, std::span<const CostVector> truth,
                               std::span<const OracleSolution> optimal,
                               std::span<const CostVector> predictions);
/// Regret of fixed decisions (one per sample) rather than predictions.
RegretSummary summarize_decisions(const DecisionOracle& oracle, std::span<const CostVector> truth,
                                  std::span<const std::vector<double>> decisions);
double average_decision_regret(const DecisionOracle& oracle, const Dataset& dataset,
                               std::span<const CostVector> predictions);
double normalized_decision_regret(const DecisionOracle& oracle, const Dataset& dataset,
                                  std::span<const CostVector> predictions);

// Instance files.
std::unique_ptr<DecisionOracle> oracle_from_json(const nlohmann::json& j);
std::unique_ptr<DecisionOracle> load_oracle(const std::filesystem::path& path);
void save_oracle(const std::filesystem::path& path, const DecisionOracle& oracle);
nlohmann::ordered_json solution_to_json(const OracleSolution& solution);

}  // namespace dff
