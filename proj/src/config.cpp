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
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dff/error.hpp"
#include "dff/experiment.hpp"

namespace dff {

std::string benchmark_name(Benchmark b) {
  switch (b) {
    case Benchmark::kGridFlow: return "grid_flow";
    case Benchmark::kPortfolio: return "portfolio";
    case Benchmark::kAllocation: return "allocation";
    case Benchmark::kAllocationSim: return "allocation_sim";
  }
  return "grid_flow";
}

Benchmark parse_benchmark(const std::string& name) {
  if (name == "grid_flow") return Benchmark::kGridFlow;
  if (name == "portfolio") return Benchmark::kPortfolio;
  if (name == "allocation") return Benchmark::kAllocation;
  if (name == "allocation_sim") return Benchmark::kAllocationSim;
  throw UsageError("unknown benchmark '" + name +
                   "' (valid: grid_flow, portfolio, allocation, allocation_sim)");
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods{
      "ols",    "rf_mse",       "boost_mse",    "boost_2fold",  "nn_mse",
      "nn_spo", "dff",          "sim_backbone", "dff_over_sim", "avg_alloc"};
  return methods;
}

bool is_dff_method(const std::string& method) {
  return method == "dff" || method == "dff_over_sim";
}

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

bool is_allocation(Benchmark b) {
  return b == Benchmark::kAllocation || b == Benchmark::kAllocationSim;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string strip_value(std::string s) {
  s = trim(std::move(s));
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  return trim(std::move(s));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(strip_value(text));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = strip_value(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  const std::string s = strip_value(text);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw UsageError("setting '" + key + "' expects an integer, got '" + text + "'");
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    return parse_double(strip_value(text));
  } catch (const DataError&) {
    throw UsageError("setting '" + key + "' expects a number, got '" + text + "'");
  }
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  const auto items = split_list(text);
  if (items.empty()) throw UsageError("seed list is empty");
  if (items.size() == 1 && text.find(',') == std::string::npos &&
      text.find('[') == std::string::npos) {
    const auto n = parse_integer<std::uint64_t>("seeds", items.front());
    if (n == 0) throw UsageError("seed count must be positive");
    std::vector<std::uint64_t> seeds(n);
    for (std::uint64_t i = 0; i < n; ++i) seeds[i] = i;
    return seeds;
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& item : items) seeds.push_back(parse_integer<std::uint64_t>("seeds", item));
  return seeds;
}

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& value) {
  const std::string key = trim(raw_key);
  auto real = [&] { return parse_real(key, value); };
  auto size = [&] { return parse_integer<std::size_t>(key, value); };
  auto integer = [&] { return parse_integer<int>(key, value); };
  auto text = [&] { return strip_value(value); };

  if (key == "experiment.benchmark") c.benchmark = parse_benchmark(text());
  else if (key == "experiment.variant") c.variant = integer();
  else if (key == "experiment.methods") c.methods = split_list(value);
  else if (key == "experiment.seeds") c.seeds = parse_seeds(value);
  else if (key == "experiment.epsilon") c.epsilon = real();
  else if (key == "experiment.dff_backbone") c.dff_backbone = text();
  else if (key == "experiment.eps_grid") {
    c.eps_grid.clear();
    for (const auto& item : split_list(value)) c.eps_grid.push_back(parse_real(key, item));
  } else if (key == "experiment.bins") c.bins = size();
  else if (key == "experiment.workers") c.workers = size();
  else if (key == "experiment.out") c.out_dir = text();
  else if (key == "data.p") c.data.p = size();
  else if (key == "data.n_train") c.data.n_train = size();
  else if (key == "data.n_test") c.data.n_test = size();
  else if (key == "data.val_frac") c.data.val_frac = real();
  else if (key == "data.noise") c.data.noise = real();
  else if (key == "data.mechanism") {
    parse_mechanism(text());
    c.data.mechanism = text();
  } else if (key == "data.degree") c.data.degree = integer();
  else if (key == "data.grid_rows") c.data.grid_rows = integer();
  else if (key == "data.grid_cols") c.data.grid_cols = integer();
  else if (key == "data.assets") c.data.assets = size();
  else if (key == "data.factors") c.data.factors = size();
  else if (key == "data.cities") c.data.cities = size();
  else if (key == "train.lr") c.train.lr = real();
  else if (key == "train.batch_size") c.train.batch_size = size();
  else if (key == "train.max_epochs") c.train.max_epochs = size();
  else if (key == "train.patience") c.train.patience = size();
  else if (key == "train.beta1") c.train.beta1 = real();
  else if (key == "train.beta2") c.train.beta2 = real();
  else if (key == "train.adam_eps") c.train.adam_eps = real();
  else if (key == "train.hidden") {
    c.train.hidden.clear();
    for (const auto& item : split_list(value)) {
      c.train.hidden.push_back(parse_integer<std::size_t>(key, item));
    }
  } else if (key == "train.bias_mode") {
    const std::string mode = text();
    if (mode != "zero" && mode != "learned") throw UsageError("bias_mode must be zero or learned");
    c.train.bias_mode = mode == "zero" ? BiasMode::kZero : BiasMode::kLearned;
  } else if (key == "backbone.depth") c.backbone.depth = integer();
  else if (key == "backbone.trees") c.backbone.trees = integer();
  else if (key == "backbone.shrinkage") c.backbone.shrinkage = real();
  else if (key == "backbone.subsample") c.backbone.subsample = real();
  else if (key == "backbone.folds") c.backbone.folds = size();
  else throw UsageError("unknown setting '" + key + "'");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw IoError("cannot read config " + path.string());
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig config;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw UsageError("config setting '" + section + "' must live inside a section");
    }
    for (const auto& [key, node] : entries) {
      apply_setting(config, section + "." + key, node.get_value<std::string>());
    }
  }
  return config;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw UsageError("method list is empty");
  if (seeds.empty()) throw UsageError("seed list is empty");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw UsageError("unknown method '" + m + "' (valid: " + join(known_methods()) + ")");
    }
    if (!seen.insert(m).second) throw UsageError("method '" + m + "' listed twice");
    if ((m == "sim_backbone" || m == "dff_over_sim") && benchmark != Benchmark::kAllocationSim) {
      throw UsageError("method '" + m + "' needs the allocation_sim benchmark");
    }
    if (m == "avg_alloc" && !is_allocation(benchmark)) {
      throw UsageError("avg_alloc needs an allocation benchmark");
    }
  }
  if (seen.count("dff")) {
    if (!seen.count(dff_backbone)) {
      throw UsageError("dff needs its backbone '" + dff_backbone + "' in the method list");
    }
  }
  if (is_dff_method(dff_backbone) || dff_backbone == "avg_alloc" ||
      std::find(known_methods().begin(), known_methods().end(), dff_backbone) ==
          known_methods().end()) {
    throw UsageError("'" + dff_backbone + "' cannot serve as a dff backbone");
  }
  if (variant != 1 && variant != 2) throw UsageError("dataset variant must be 1 or 2");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw UsageError("epsilon must be nonnegative");
  if (eps_grid.empty()) throw UsageError("epsilon grid is empty");
  for (double e : eps_grid) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw UsageError("epsilon grid values must be nonnegative");
  }
  if (bins < 1) throw UsageError("bins must be at least 1");
  if (workers < 1) throw UsageError("workers must be at least 1");
  if (data.p < 1) throw UsageError("p must be at least 1");
  if (data.n_train < 3) throw UsageError("n_train must be at least 3");
  if (data.n_test < 1) throw UsageError("n_test must be at least 1");
  if (!(data.val_frac > 0.0 && data.val_frac < 1.0)) throw UsageError("val_frac must lie in (0, 1)");
  if (data.noise && !(*data.noise >= 0.0 && *data.noise < 1.0)) {
    throw UsageError("noise must lie in [0, 1)");
  }
  if (data.degree && *data.degree < 1) throw UsageError("degree must be at least 1");
  if (data.grid_rows < 1 || data.grid_cols < 1 || data.grid_rows * data.grid_cols < 2) {
    throw UsageError("grid needs at least two nodes");
  }
  if (data.assets < 1 || data.factors < 1) throw UsageError("portfolio needs assets, factors >= 1");
  if (data.cities < 1) throw UsageError("allocation needs at least one city");
  train.validate();
  if (backbone.depth < 0) throw UsageError("tree depth must be nonnegative");
  if (backbone.trees < 1 || backbone.trees > 100) throw UsageError("trees must lie in 1..100");
  if (!(backbone.shrinkage >= 0.0 && backbone.shrinkage <= 1.0)) {
    throw UsageError("shrinkage must lie in [0, 1]");
  }
  if (!(backbone.subsample > 0.0 && backbone.subsample <= 1.0)) {
    throw UsageError("subsample must lie in (0, 1]");
  }
  if (backbone.folds < 2) throw UsageError("cross-fitting needs at least two folds");
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["benchmark"] = benchmark_name(benchmark);
  j["variant"] = variant;
  j["methods"] = methods;
  j["seeds"] = seeds;
  j["epsilon"] = epsilon;
  j["dff_backbone"] = dff_backbone;
  j["eps_grid"] = eps_grid;
  j["bins"] = bins;
  auto& d = j["data"];
  d["p"] = data.p;
  d["n_train"] = data.n_train;
  d["n_test"] = data.n_test;
  d["val_frac"] = data.val_frac;
  d["noise"] = data.noise ? nlohmann::ordered_json(*data.noise) : nlohmann::ordered_json();
  d["mechanism"] = data.mechanism ? nlohmann::ordered_json(*data.mechanism) : nlohmann::ordered_json();
  d["degree"] = data.degree ? nlohmann::ordered_json(*data.degree) : nlohmann::ordered_json();
  d["grid_rows"] = data.grid_rows;
  d["grid_cols"] = data.grid_cols;
  d["assets"] = data.assets;
  d["factors"] = data.factors;
  d["cities"] = data.cities;
  auto& t = j["train"];
  t["lr"] = train.lr;
  t["batch_size"] = train.batch_size;
  t["max_epochs"] = train.max_epochs;
  t["patience"] = train.patience;
  t["beta1"] = train.beta1;
  t["beta2"] = train.beta2;
  t["adam_eps"] = train.adam_eps;
  t["hidden"] = train.hidden;
  t["bias_mode"] = train.bias_mode == BiasMode::kZero ? "zero" : "learned";
  auto& b = j["backbone"];
  b["depth"] = backbone.depth;
  b["trees"] = backbone.trees;
  b["shrinkage"] = backbone.shrinkage;
  b["subsample"] = backbone.subsample;
  b["folds"] = backbone.folds;
  return j;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dff
