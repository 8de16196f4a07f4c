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

// Shared domain types: samples, datasets, seeded randomness, splitting and the
// CSV + JSON-sidecar dataset format.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dff {

using FeatureVector = std::vector<double>;
using CostVector = std::vector<double>;

/// Deterministic generator: mt19937_64 with hand-rolled distributions, so the
/// stream of doubles is identical across standard libraries. Bump kVersion if
/// any draw sequence changes.
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64";
  static constexpr int kVersion = 1;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one draw per call, no cached state).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Unbiased integer in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent child seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

struct Sample {
  FeatureVector x;
  CostVector c;
};

/// Ordered samples sharing feature width p and cost width d. Immutable once
/// built. Empty datasets are representable (zero-fraction splits).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Sample> samples, std::size_t p, std::size_t d,
          std::string provenance = "external", std::uint64_t seed = 0);

  /// Builds from row-major N x p features and N x d costs.
  static Dataset from_matrices(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c,
                               std::string provenance = "external",
                               std::uint64_t seed = 0);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t p() const noexcept { return p_; }
  std::size_t d() const noexcept { return d_; }
  const std::string& provenance() const noexcept { return provenance_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }

  Dataset subset(std::span<const std::size_t> indices) const;
  Eigen::MatrixXd features() const;
  Eigen::MatrixXd costs() const;
  std::vector<CostVector> cost_vectors() const;

 private:
  std::vector<Sample> samples_;
  std::size_t p_ = 0;
  std::size_t d_ = 0;
  std::string provenance_ = "external";
  std::uint64_t seed_ = 0;
};

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded disjoint partition. Validation and test sizes are floor(N * frac);
/// the remainder goes to train.
DatasetSplit split_dataset(const Dataset& dataset, const SplitSpec& spec);

/// k disjoint folds of sorted sample indices whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed);

// Number formatting shared by every text format: shortest representation that
// parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// Writes `<stem>.csv` and `<stem>.meta.json`. `csv_path` must end in ".csv".
void write_dataset_csv(const std::filesystem::path& csv_path, const Dataset& dataset);
Dataset read_dataset_csv(const std::filesystem::path& csv_path);
std::filesystem::path meta_path_for(const std::filesystem::path& csv_path);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> a);

}  // namespace dff
