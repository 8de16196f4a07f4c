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
#include <numeric>

#include "dff/datagen.hpp"
#include "dff/error.hpp"

namespace dff {

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kPolynomial: return "polynomial";
    case Mechanism::kPeriodic: return "periodic";
    case Mechanism::kPiecewise: return "piecewise";
  }
  return "polynomial";
}

Mechanism parse_mechanism(const std::string& name) {
  if (name == "polynomial") return Mechanism::kPolynomial;
  if (name == "periodic") return Mechanism::kPeriodic;
  if (name == "piecewise") return Mechanism::kPiecewise;
  throw UsageError("unknown mechanism '" + name + "' (valid: polynomial, periodic, piecewise)");
}

Mechanism GeneratorSpec::default_mechanism(int variant) {
  return variant == 2 ? Mechanism::kPiecewise : Mechanism::kPolynomial;
}

GeneratorSpec GeneratorSpec::preset(int variant, std::size_t d, std::uint64_t seed) {
  if (variant != 1 && variant != 2) throw UsageError("dataset variant must be 1 or 2");
  GeneratorSpec s;
  s.variant = variant;
  s.mechanism = default_mechanism(variant);
  s.degree = variant == 1 ? 2 : 4;
  s.d = d;
  s.seed = seed;
  return s;
}

void GeneratorSpec::validate() const {
  if (p < 1 || d < 1) throw UsageError("generator needs p, d >= 1");
  if (degree < 1) throw UsageError("polynomial degree must be at least 1");
  if (!(noise >= 0.0 && noise < 1.0)) throw UsageError("noise half-width must lie in [0, 1)");
  if (variant != 1 && variant != 2) throw UsageError("dataset variant must be 1 or 2");
}

nlohmann::ordered_json GeneratorSpec::to_json() const {
  nlohmann::ordered_json j;
  j["mechanism"] = mechanism_name(mechanism);
  j["variant"] = variant;
  j["p"] = p;
  j["d"] = d;
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  j["degree"] = degree;
  j["noise"] = noise;
  j["seed"] = seed;
  return j;
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  try {
    s.mechanism = parse_mechanism(j.at("mechanism").get<std::string>());
    s.variant = j.at("variant").get<int>();
    s.p = j.at("p").get<std::size_t>();
    s.d = j.at("d").get<std::size_t>();
    s.n_train = j.at("n_train").get<std::size_t>();
    s.n_test = j.at("n_test").get<std::size_t>();
    s.degree = j.at("degree").get<int>();
    s.noise = j.at("noise").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed generator spec: ") + e.what());
  }
  s.validate();
  return s;
}

Eigen::MatrixXd gen_features(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) = rng.normal();
  return x;
}

Eigen::MatrixXd mixing_matrix(const GeneratorSpec& spec) {
  Rng rng(derive_seed(spec.seed, "mixing"));
  Eigen::MatrixXd b(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(spec.p));
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index k = 0; k < b.cols(); ++k) b(j, k) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return b;
}

double mechanism_base(const GeneratorSpec& spec, double z) {
  double base = 0.0;
  switch (spec.mechanism) {
    case Mechanism::kPolynomial:
      base = std::pow(z + 3.0, spec.degree) + 1.0;
      break;
    case Mechanism::kPeriodic:
      base = (spec.variant == 1 ? std::sin(z) : std::sin(2.0 * z)) + 0.5 * z + 3.0;
      break;
    case Mechanism::kPiecewise:
      base = spec.variant == 1
                 ? 2.0 + std::max(z, 0.0) + 3.0 * std::max(z - 1.0, 0.0)
                 : 2.0 + 0.5 * std::max(z, 0.0) + 5.0 * std::max(z - 0.5, 0.0);
      break;
  }
  return std::max(base, 1.0);
}

Eigen::MatrixXd gen_costs(const GeneratorSpec& spec, const Eigen::MatrixXd& x,
                          std::uint64_t noise_seed) {
  spec.validate();
  if (x.cols() != static_cast<Eigen::Index>(spec.p)) throw DataError("feature width does not match p");
  const Eigen::MatrixXd b = mixing_matrix(spec);
  const Eigen::MatrixXd z = (x * b.transpose()) / std::sqrt(static_cast<double>(spec.p));
  Rng rng(noise_seed);
  Eigen::MatrixXd c(x.rows(), static_cast<Eigen::Index>(spec.d));
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double eta = rng.uniform(1.0 - spec.noise, 1.0 + spec.noise);
      c(i, j) = mechanism_base(spec, z(i, j)) * eta;
    }
  }
  return c;
}

GeneratedData generate_datasets(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_train + spec.n_test;
  const Eigen::MatrixXd x = gen_features(n, spec.p, derive_seed(spec.seed, "features"));
  const Eigen::MatrixXd c = gen_costs(spec, x, derive_seed(spec.seed, "noise"));
  const std::string provenance = spec.to_json().dump();
  const auto tr = static_cast<Eigen::Index>(spec.n_train);
  const auto te = static_cast<Eigen::Index>(spec.n_test);
  GeneratedData out;
  out.train = Dataset::from_matrices(x.topRows(tr), c.topRows(tr), provenance, spec.seed);
  out.test = Dataset::from_matrices(x.bottomRows(te), c.bottomRows(te), provenance, spec.seed);
  return out;
}

PortfolioInstance gen_portfolio_instance(std::size_t d, std::size_t n_factors, std::uint64_t seed) {
  if (d < 1 || n_factors < 1) throw UsageError("portfolio needs d, n_factors >= 1");
  Rng rng(derive_seed(seed, "portfolio"));
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd f(n, static_cast<Eigen::Index>(n_factors));
  const double scale = 0.15 / std::sqrt(static_cast<double>(n_factors));
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index k = 0; k < f.cols(); ++k) f(i, k) = scale * rng.normal();
  PortfolioInstance inst;
  inst.sigma = f * f.transpose();
  for (Eigen::Index i = 0; i < n; ++i) inst.sigma(i, i) += rng.uniform(0.005, 0.02);
  inst.sigma = 0.5 * (inst.sigma + inst.sigma.transpose()).eval();
  const Eigen::VectorXd equal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(d));
  inst.gamma = equal.dot(inst.sigma * equal);
  return inst;
}

// ---------------------------------------------------------------------------

namespace {

double response(const AllocationScenario& s, std::size_t j, std::span<const double> x) {
  const double z = s.signal(j, x);
  return s.variant == 1 ? z : (z * z - 1.0) / std::sqrt(2.0);
}

}  // namespace

double AllocationScenario::signal(std::size_t j, std::span<const double> x) const {
  return dot(signal_weights[j], x);
}

CostVector AllocationScenario::mean_rates(std::span<const double> x) const {
  if (x.size() != p) throw DataError("allocation features have the wrong width");
  CostVector out(cities());
  for (std::size_t j = 0; j < cities(); ++j) {
    out[j] = std::clamp(group_mean[j] + spread * response(*this, j, x), 0.01, 0.99);
  }
  return out;
}

void AllocationScenario::validate() const {
  instance.validate();
  if (group_mean.size() != instance.dim() || signal_weights.size() != instance.dim()) {
    throw DataError("allocation scenario arrays disagree on the city count");
  }
  for (const auto& row : signal_weights) {
    if (row.size() != p) throw DataError("signal weight row has the wrong width");
  }
  if (variant != 1 && variant != 2) throw DataError("allocation variant must be 1 or 2");
  if (!(noise >= 0.0 && noise < 1.0)) throw DataError("allocation noise must lie in [0, 1)");
}

nlohmann::ordered_json AllocationScenario::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["p"] = p;
  j["caps"] = instance.caps;
  j["budget"] = instance.budget;
  j["group_mean"] = group_mean;
  j["signal_weights"] = signal_weights;
  j["spread"] = spread;
  j["noise"] = noise;
  return j;
}

AllocationScenario AllocationScenario::from_json(const nlohmann::json& j) {
  AllocationScenario s;
  try {
    s.variant = j.at("variant").get<int>();
    s.p = j.at("p").get<std::size_t>();
    s.instance.caps = j.at("caps").get<std::vector<double>>();
    s.instance.budget = j.at("budget").get<double>();
    s.group_mean = j.at("group_mean").get<std::vector<double>>();
    s.signal_weights = j.at("signal_weights").get<std::vector<std::vector<double>>>();
    s.spread = j.at("spread").get<double>();
    s.noise = j.at("noise").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed allocation scenario: ") + e.what());
  }
  s.validate();
  return s;
}

AllocationScenario gen_allocation_scenario(std::size_t k, std::size_t p, int variant,
                                           std::uint64_t seed) {
  if (k < 1 || p < 1) throw UsageError("allocation scenario needs K, p >= 1");
  if (variant != 1 && variant != 2) throw UsageError("dataset variant must be 1 or 2");
  Rng rng(derive_seed(seed, "allocation"));
  AllocationScenario s;
  s.variant = variant;
  s.p = p;
  s.group_mean.resize(k);
  for (std::size_t j = 0; j < k; ++j) s.group_mean[j] = j < k / 2 ? 0.65 : 0.25;
  rng.shuffle(std::span<double>(s.group_mean));
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> row(p, 0.0);
    std::size_t ones = 0;
    for (std::size_t q = 0; q < p; ++q) {
      if (rng.bernoulli(0.5)) {
        row[q] = 1.0;
        ++ones;
      }
    }
    if (ones == 0) {
      row[rng.index(p)] = 1.0;
      ones = 1;
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(ones));
    for (double& v : row) v *= norm;
    s.signal_weights.push_back(std::move(row));
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    s.instance.caps.push_back(rng.uniform(0.5, 1.5));
    total += s.instance.caps.back();
  }
  s.instance.budget = 0.5 * total;
  s.validate();
  return s;
}

Dataset gen_allocation_data(const AllocationScenario& scenario, std::size_t n,
                            std::uint64_t seed) {
  scenario.validate();
  const Eigen::MatrixXd x = gen_features(n, scenario.p, derive_seed(seed, "features"));
  Rng rng(derive_seed(seed, "noise"));
  std::vector<Sample> samples;
  samples.reserve(n);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Sample s;
    s.x.resize(scenario.p);
    for (std::size_t q = 0; q < scenario.p; ++q) s.x[q] = x(i, static_cast<Eigen::Index>(q));
    s.c.resize(scenario.cities());
    for (std::size_t j = 0; j < s.c.size(); ++j) {
      const double rate = scenario.group_mean[j] + scenario.spread * response(scenario, j, s.x);
      const double eta = rng.uniform(1.0 - scenario.noise, 1.0 + scenario.noise);
      s.c[j] = std::clamp(rate * eta, 0.01, 0.99);
    }
    samples.push_back(std::move(s));
  }
  nlohmann::ordered_json provenance;
  provenance["generator"] = "allocation";
  provenance["variant"] = scenario.variant;
  provenance["seed"] = seed;
  return Dataset(std::move(samples), scenario.p, scenario.cities(), provenance.dump(), seed);
}

SimulationScenario gen_simulation_scenario(const AllocationScenario& scenario,
                                           std::uint64_t seed) {
  scenario.validate();
  Rng rng(derive_seed(seed, "simulation"));
  SimulationScenario sim;
  sim.inputs = scenario.p;
  sim.subsidy_weights = scenario.signal_weights;
  for (std::size_t j = 0; j < scenario.cities(); ++j) {
    const double b = rng.uniform(-0.5, 0.5);
    const double level = rng.uniform(0.8, 1.2);
    const double slope = rng.uniform(0.5, 1.5);
    const double z0 = std::clamp(scenario.group_mean[j] * level, 0.01, 0.99);
    const double s_prime = z0 * (1.0 - z0);
    // fixed point z0 at zero signal, with dz/ds = spread * slope there
    sim.b.push_back(b);
    sim.c0.push_back(std::log(z0 / (1.0 - z0)) - b * z0);
    sim.a.push_back(scenario.spread * slope * (1.0 - s_prime * b) / s_prime);
  }
  sim.validate();
  return sim;
}

}  // namespace dff
