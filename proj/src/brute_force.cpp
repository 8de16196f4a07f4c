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

#include <cmath>
#include <functional>
#include <limits>

#include "dff/error.hpp"
#include "dff/oracle.hpp"

namespace dff {

namespace {

OracleSolution enumerate_grid_paths(const GridShortestPathOracle& oracle,
                                    std::span<const double> c) {
  const GridGraph& g = oracle.graph();
  if (g.rows() > 4 || g.cols() > 4) throw UsageError("brute force supports grids up to 4x4");
  OracleSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<double> w(g.num_edges(), 0.0);
  std::size_t paths = 0;
  // Depth-first in increasing edge order visits paths lexicographically, so a
  // strict comparison keeps the lexicographically smallest optimum.
  std::function<void(int)> walk = [&](int node) {
    if (node == g.sink()) {
      ++paths;
      const double value = dot(c, w);
      if (value < best.objective) {
        best.objective = value;
        best.w = w;
      }
      return;
    }
    for (int e : g.out_edges(node)) {
      w[e] = 1.0;
      walk(g.edges()[e].to);
      w[e] = 0.0;
    }
  };
  walk(g.source());
  best.optimal = true;
  best.diagnostics["paths_enumerated"] = static_cast<double>(paths);
  return best;
}

OracleSolution enumerate_simplex_lattice(const PortfolioOracle& oracle,
                                         std::span<const double> c) {
  const auto& inst = oracle.instance();
  const std::size_t d = inst.dim();
  if (d > 3) throw UsageError("brute force supports portfolios with d <= 3");
  constexpr int kSteps = 1000;
  OracleSolution best;
  best.objective = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd w(static_cast<Eigen::Index>(d));
  auto consider = [&]() {
    if (w.dot(inst.sigma * w) > inst.gamma + 1e-12) return;
    const double value = dot(c, std::span<const double>(w.data(), d));
    if (value > best.objective) {
      best.objective = value;
      best.w.assign(w.data(), w.data() + d);
    }
  };
  if (d == 1) {
    w(0) = 1.0;
    consider();
  } else if (d == 2) {
    for (int i = 0; i <= kSteps; ++i) {
      w(0) = static_cast<double>(i) / kSteps;
      w(1) = static_cast<double>(kSteps - i) / kSteps;
      consider();
    }
  } else {
    for (int i = 0; i <= kSteps; ++i) {
      for (int j = 0; i + j <= kSteps; ++j) {
        w(0) = static_cast<double>(i) / kSteps;
        w(1) = static_cast<double>(j) / kSteps;
        w(2) = static_cast<double>(kSteps - i - j) / kSteps;
        consider();
      }
    }
  }
  if (best.w.empty()) throw SolverError("no lattice point satisfies the risk budget");
  best.optimal = true;
  best.diagnostics["lattice_resolution"] = 1.0 / kSteps;
  return best;
}

OracleSolution enumerate_allocation_vertices(const AllocationOracle& oracle,
                                             std::span<const double> c) {
  const auto& inst = oracle.instance();
  const std::size_t k = inst.dim();
  if (k > 6) throw UsageError("brute force supports allocation with K <= 6");
  OracleSolution best;
  best.objective = -std::numeric_limits<double>::infinity();
  // Every vertex of the box-plus-budget polytope has each coordinate at a
  // bound except possibly one, which is then fixed by the budget row.
  std::size_t combos = 1;
  for (std::size_t j = 0; j < k; ++j) combos *= 3;
  std::vector<double> w(k);
  std::size_t vertices = 0;
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t rest = code;
    int free_index = -1;
    bool valid = true;
    double fixed = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t state = rest % 3;
      rest /= 3;
      if (state == 0) {
        w[j] = 0.0;
      } else if (state == 1) {
        w[j] = inst.caps[j];
        fixed += inst.caps[j];
      } else {
        if (free_index >= 0) valid = false;
        free_index = static_cast<int>(j);
      }
    }
    if (!valid) continue;
    if (free_index >= 0) {
      const double value = inst.budget - fixed;
      if (value < 0.0 || value > inst.caps[free_index]) continue;
      w[free_index] = value;
    } else if (fixed > inst.budget) {
      continue;
    }
    ++vertices;
    const double objective = dot(c, w);
    if (objective > best.objective) {
      best.objective = objective;
      best.w = w;
    }
  }
  best.optimal = true;
  best.diagnostics["vertices_enumerated"] = static_cast<double>(vertices);
  return best;
}

}  // namespace

OracleSolution brute_force_solve(const DecisionOracle& oracle, std::span<const double> c) {
  if (c.size() != oracle.dim()) throw DataError("brute force: cost vector has the wrong length");
  if (const auto* grid = dynamic_cast<const GridShortestPathOracle*>(&oracle)) {
    return enumerate_grid_paths(*grid, c);
  }
  if (const auto* portfolio = dynamic_cast<const PortfolioOracle*>(&oracle)) {
    return enumerate_simplex_lattice(*portfolio, c);
  }
  if (const auto* allocation = dynamic_cast<const AllocationOracle*>(&oracle)) {
    return enumerate_allocation_vertices(*allocation, c);
  }
  throw UsageError("no brute-force solver for oracle kind '" + oracle.kind() + "'");
}

}  // namespace dff
