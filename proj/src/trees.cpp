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

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dff/backbone.hpp"
#include "dff/error.hpp"

namespace dff {

RegressionTree::RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw DataError("tree needs at least one node");
  const int n = static_cast<int>(nodes_.size());
  for (const auto& node : nodes_) {
    if (node.feature >= 0 && (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n)) {
      throw DataError("tree node has an invalid child index");
    }
    if (!std::isfinite(node.value) || !std::isfinite(node.threshold)) {
      throw DataError("tree node holds a non-finite value");
    }
  }
}

double RegressionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes_[i].feature >= 0) {
    const TreeNode& node = nodes_[i];
    i = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes_[i].value;
}

int RegressionTree::depth() const {
  std::function<int(int)> rec = [&](int i) -> int {
    const TreeNode& node = nodes_[i];
    if (node.feature < 0) return 0;
    return 1 + std::max(rec(node.left), rec(node.right));
  };
  return rec(0);
}

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  std::span<const double> y;
  int max_depth;
  std::vector<TreeNode> nodes;

  int build(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t r : rows) {
      sum += y[r];
      sum_sq += y[r] * y[r];
    }
    const double n = static_cast<double>(rows.size());
    nodes[id].value = rows.empty() ? 0.0 : sum / n;
    if (depth >= max_depth || rows.size() < 2) return id;

    const double base_score = sum * sum / n;
    const double min_gain = 1e-12 * std::max(1.0, sum_sq);
    double best_gain = min_gain;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order(rows);
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        left_sum += y[order[i]];
        const double lo = x(order[i], f);
        const double hi = x(order[i + 1], f);
        if (!(lo < hi)) continue;
        const double n_left = static_cast<double>(i + 1);
        const double right_sum = sum - left_sum;
        const double gain =
            left_sum * left_sum / n_left + right_sum * right_sum / (n - n_left) - base_score;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double threshold = lo + 0.5 * (hi - lo);
          if (!(threshold < hi)) threshold = lo;
          best_threshold = threshold;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (std::size_t r : rows) {
      (x(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    const int left = build(std::move(left_rows), depth + 1);
    const int right = build(std::move(right_rows), depth + 1);
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    nodes[id].left = left;
    nodes[id].right = right;
    return id;
  }
};

}  // namespace

RegressionTree fit_regression_tree(const Eigen::MatrixXd& x, std::span<const double> y,
                                   std::span<const std::size_t> rows, int max_depth) {
  if (max_depth < 0) throw UsageError("tree depth must be nonnegative");
  TreeBuilder builder{x, y, max_depth, {}};
  builder.build(std::vector<std::size_t>(rows.begin(), rows.end()), 0);
  return RegressionTree(std::move(builder.nodes));
}

// ---------------------------------------------------------------------------

TreeEnsemble::TreeEnsemble(Kind kind, std::size_t inputs, std::vector<double> base, double scale,
                           std::vector<std::vector<RegressionTree>> trees)
    : kind_(kind), inputs_(inputs), base_(std::move(base)), scale_(scale), trees_(std::move(trees)) {
  if (base_.empty() || trees_.size() != base_.size()) {
    throw DataError("tree ensemble needs one tree set per output");
  }
  for (const auto& set : trees_) {
    if (set.size() != trees_.front().size()) throw DataError("ragged tree ensemble");
    for (const auto& tree : set) {
      for (const auto& node : tree.nodes()) {
        if (node.feature >= static_cast<int>(inputs_)) throw DataError("tree splits on a missing feature");
      }
    }
  }
  if (!all_finite(base_) || !std::isfinite(scale_)) throw DataError("non-finite ensemble parameters");
}

CostVector TreeEnsemble::predict(std::span<const double> x) const {
  CostVector out(base_.size());
  for (std::size_t j = 0; j < base_.size(); ++j) {
    double s = 0.0;
    for (const auto& tree : trees_[j]) s += tree.predict(x);
    out[j] = base_[j] + scale_ * s;
  }
  return out;
}

std::string TreeEnsemble::describe() const {
  return kind_ == Kind::kBoosted ? "boosted trees" : "random forest";
}

int TreeEnsemble::max_depth() const {
  int depth = 0;
  for (const auto& set : trees_)
    for (const auto& tree : set) depth = std::max(depth, tree.depth());
  return depth;
}

TreeEnsemble TreeEnsemble::prefix(std::size_t n) const {
  if (kind_ != Kind::kBoosted) throw UsageError("prefix is only meaningful for boosted ensembles");
  std::vector<std::vector<RegressionTree>> trees;
  for (const auto& set : trees_) {
    trees.emplace_back(set.begin(), set.begin() + static_cast<std::ptrdiff_t>(std::min(n, set.size())));
  }
  return TreeEnsemble(kind_, inputs_, base_, scale_, std::move(trees));
}

void TreeEnsemble::write(std::ostream& out) const {
  out << "dff-tree-ensemble 1\n";
  out << "kind " << (kind_ == Kind::kBoosted ? "boosted" : "forest") << '\n';
  out << "inputs " << inputs_ << '\n';
  out << "outputs " << base_.size() << '\n';
  out << "trees_per_output " << trees_per_output() << '\n';
  out << "scale " << format_double(scale_) << '\n';
  out << "base";
  for (double b : base_) out << ' ' << format_double(b);
  out << '\n';
  for (std::size_t j = 0; j < trees_.size(); ++j) {
    for (std::size_t t = 0; t < trees_[j].size(); ++t) {
      const auto& nodes = trees_[j][t].nodes();
      out << "tree " << j << ' ' << t << ' ' << nodes.size() << '\n';
      for (const auto& node : nodes) {
        out << "node " << node.feature << ' ' << format_double(node.threshold) << ' ' << node.left
            << ' ' << node.right << ' ' << format_double(node.value) << '\n';
      }
    }
  }
  out << "end\n";
}

namespace {

void expect_token(std::istringstream& in, const std::string& want) {
  std::string got;
  in >> got;
  if (got != want) throw DataError("tree dump: expected '" + want + "', found '" + got + "'");
}

std::istringstream next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("tree dump: unexpected end of input");
  return std::istringstream(line);
}

double read_double(std::istringstream& in) {
  std::string token;
  if (!(in >> token)) throw DataError("tree dump: missing number");
  return parse_double(token);
}

template <typename T>
T read_int(std::istringstream& in) {
  T value{};
  if (!(in >> value)) throw DataError("tree dump: missing integer");
  return value;
}

}  // namespace

TreeEnsemble TreeEnsemble::read(std::istream& in) {
  auto header = next_line(in);
  expect_token(header, "dff-tree-ensemble");
  if (read_int<int>(header) != 1) throw DataError("tree dump: unsupported version");

  auto kind_line = next_line(in);
  expect_token(kind_line, "kind");
  std::string kind_name;
  kind_line >> kind_name;
  if (kind_name != "boosted" && kind_name != "forest") throw DataError("tree dump: bad kind");
  const Kind kind = kind_name == "boosted" ? Kind::kBoosted : Kind::kForest;

  auto scalar = [&](const std::string& key) {
    auto line = next_line(in);
    expect_token(line, key);
    return read_int<std::size_t>(line);
  };
  const std::size_t inputs = scalar("inputs");
  const std::size_t outputs = scalar("outputs");
  const std::size_t per_output = scalar("trees_per_output");

  auto scale_line = next_line(in);
  expect_token(scale_line, "scale");
  const double scale = read_double(scale_line);

  auto base_line = next_line(in);
  expect_token(base_line, "base");
  std::vector<double> base;
  for (std::size_t j = 0; j < outputs; ++j) base.push_back(read_double(base_line));

  std::vector<std::vector<RegressionTree>> trees(outputs);
  for (std::size_t j = 0; j < outputs; ++j) {
    for (std::size_t t = 0; t < per_output; ++t) {
      auto tree_line = next_line(in);
      expect_token(tree_line, "tree");
      if (read_int<std::size_t>(tree_line) != j || read_int<std::size_t>(tree_line) != t) {
        throw DataError("tree dump: trees out of order");
      }
      const auto count = read_int<std::size_t>(tree_line);
      std::vector<TreeNode> nodes(count);
      for (auto& node : nodes) {
        auto node_line = next_line(in);
        expect_token(node_line, "node");
        node.feature = read_int<int>(node_line);
        node.threshold = read_double(node_line);
        node.left = read_int<int>(node_line);
        node.right = read_int<int>(node_line);
        node.value = read_double(node_line);
      }
      trees[j].emplace_back(std::move(nodes));
    }
  }
  auto end = next_line(in);
  expect_token(end, "end");
  return TreeEnsemble(kind, inputs, std::move(base), scale, std::move(trees));
}

// ---------------------------------------------------------------------------

TreeEnsemble fit_gbt(const Dataset& data, const GbtConfig& config) {
  if (data.size() < 2) throw DataError("boosting needs at least two samples");
  if (config.n_trees < 0 || config.n_trees > 100) throw UsageError("boosting uses 0..100 trees");
  if (config.max_depth < 0) throw UsageError("tree depth must be nonnegative");
  if (!(config.shrinkage >= 0.0 && config.shrinkage <= 1.0)) {
    throw UsageError("shrinkage must lie in [0, 1]");
  }
  const Eigen::MatrixXd x = data.features();
  const std::size_t n = data.size();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);

  std::vector<double> base(data.d());
  std::vector<std::vector<RegressionTree>> trees(data.d());
  std::vector<double> fitted(n);
  std::vector<double> residual(n);
  for (std::size_t j = 0; j < data.d(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data[i].c[j];
    mean /= static_cast<double>(n);
    base[j] = mean;
    std::fill(fitted.begin(), fitted.end(), mean);
    for (int t = 0; t < config.n_trees; ++t) {
      for (std::size_t i = 0; i < n; ++i) residual[i] = data[i].c[j] - fitted[i];
      RegressionTree tree = fit_regression_tree(x, residual, rows, config.max_depth);
      for (std::size_t i = 0; i < n; ++i) fitted[i] += config.shrinkage * tree.predict(data[i].x);
      trees[j].push_back(std::move(tree));
    }
  }
  return TreeEnsemble(TreeEnsemble::Kind::kBoosted, data.p(), std::move(base), config.shrinkage,
                      std::move(trees));
}

TreeEnsemble fit_random_forest(const Dataset& data, const ForestConfig& config) {
  if (data.size() < 1) throw DataError("random forest needs data");
  if (config.n_trees < 1 || config.n_trees > 100) throw UsageError("random forest uses 1..100 trees");
  if (!(config.subsample > 0.0 && config.subsample <= 1.0)) {
    throw UsageError("subsample rate must lie in (0, 1]");
  }
  const Eigen::MatrixXd x = data.features();
  const std::size_t n = data.size();
  const std::size_t m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(n))));
  Rng rng(derive_seed(config.seed, "forest"));

  std::vector<std::vector<RegressionTree>> trees(data.d());
  std::vector<double> target(n);
  std::vector<std::size_t> pool(n);
  for (int t = 0; t < config.n_trees; ++t) {
    std::iota(pool.begin(), pool.end(), 0);
    // partial Fisher-Yates: the first m entries are a uniform sample
    for (std::size_t i = 0; i < m; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
    std::vector<std::size_t> rows(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(rows.begin(), rows.end());
    for (std::size_t j = 0; j < data.d(); ++j) {
      for (std::size_t i = 0; i < n; ++i) target[i] = data[i].c[j];
      trees[j].push_back(fit_regression_tree(x, target, rows, config.max_depth));
    }
  }
  return TreeEnsemble(TreeEnsemble::Kind::kForest, data.p(), std::vector<double>(data.d(), 0.0),
                      1.0 / static_cast<double>(config.n_trees), std::move(trees));
}

}  // namespace dff
