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

// Seeded synthetic generators: features, feature-to-cost mechanisms, problem
// instances and the bimodal allocation scenario.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dff/backbone.hpp"
#include "dff/core.hpp"
#include "dff/oracle.hpp"
#include "json.hpp"

namespace dff {

enum class Mechanism { kPolynomial, kPeriodic, kPiecewise };

std::string mechanism_name(Mechanism m);
Mechanism parse_mechanism(const std::string& name);

/// Cost generator. With B a Bernoulli(0.5) d x p mixing matrix and
/// z = B x / sqrt(p), each cost is base(z_j) * eta_j with
/// eta_j ~ U[1 - noise, 1 + noise]. The base is floored at 1 so costs stay
/// positive for noise < 1.
struct GeneratorSpec {
  Mechanism mechanism = Mechanism::kPolynomial;
  std::size_t p = 5;
  std::size_t d = 40;
  std::size_t n_train = 100;
  std::size_t n_test = 1000;
  int degree = 2;
  double noise = 0.5;
  std::uint64_t seed = 0;
  int variant = 1;

  /// Variant presets: variant 1 defaults to the polynomial mechanism, variant
  /// 2 to the piecewise one.
  static GeneratorSpec preset(int variant, std::size_t d, std::uint64_t seed);
  static Mechanism default_mechanism(int variant);

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static GeneratorSpec from_json(const nlohmann::json& j);
};

/// N x p standard normal features.
Eigen::MatrixXd gen_features(std::size_t n, std::size_t p, std::uint64_t seed);
/// The d x p 0/1 mixing matrix of `spec`.
Eigen::MatrixXd mixing_matrix(const GeneratorSpec& spec);
/// Noise-free cost for one mixed coordinate z.
double mechanism_base(const GeneratorSpec& spec, double z);
/// N x d costs for features `x`; noise comes from the stream `noise_seed`.
Eigen::MatrixXd gen_costs(const GeneratorSpec& spec, const Eigen::MatrixXd& x,
                          std::uint64_t noise_seed);

struct GeneratedData {
  Dataset train;
  Dataset test;
};
/// Train and test sets drawn from one feature stream and one noise stream.
GeneratedData generate_datasets(const GeneratorSpec& spec);

/// Sigma = F F^T + diag(idio), gamma = risk of the equal-weight portfolio.
PortfolioInstance gen_portfolio_instance(std::size_t d, std::size_t n_factors, std::uint64_t seed);

/// Ground truth for the subsidy allocation benchmark. City j has a group mean
/// rate (0.25 or 0.65) and a subsidy signal z_j = <signal_weights_j, x> with
/// unit variance. Variant 1 rates move linearly in z_j, variant 2 with the
/// centred square (z_j^2 - 1) / sqrt(2). Rates carry multiplicative noise
/// U[1 - noise, 1 + noise] and are clipped to [0.01, 0.99].
struct AllocationScenario {
  AllocationInstance instance;
  std::vector<double> group_mean;
  std::vector<std::vector<double>> signal_weights;
  double spread = 0.07;
  double noise = 0.1;
  int variant = 1;
  std::size_t p = 5;

  std::size_t cities() const { return group_mean.size(); }
  double signal(std::size_t j, std::span<const double> x) const;
  /// Noise-free rates (still clipped).
  CostVector mean_rates(std::span<const double> x) const;
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static AllocationScenario from_json(const nlohmann::json& j);
};

AllocationScenario gen_allocation_scenario(std::size_t k, std::size_t p, int variant,
                                           std::uint64_t seed);
/// n samples of (x, noisy clipped rates).
Dataset gen_allocation_data(const AllocationScenario& scenario, std::size_t n,
                            std::uint64_t seed);

/// A deliberately imperfect simulator of `scenario`: per-city calibration
/// errors in level (x U[0.8, 1.2]) and slope (x U[0.5, 1.5]), a monotone
/// response to the subsidy signal, and a random self-reinforcement term.
SimulationScenario gen_simulation_scenario(const AllocationScenario& scenario,
                                           std::uint64_t seed);

}  // namespace dff
