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
#include <sstream>

#include "dff/backbone.hpp"
#include "dff/error.hpp"

namespace dff {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

void SimulationScenario::validate() const {
  const std::size_t k = a.size();
  if (k == 0) throw DataError("simulation scenario has no cities");
  if (b.size() != k || c0.size() != k || subsidy_weights.size() != k) {
    throw DataError("simulation scenario arrays disagree on the city count");
  }
  if (inputs == 0) throw DataError("simulation scenario needs at least one input");
  for (const auto& row : subsidy_weights) {
    if (row.size() != inputs) throw DataError("subsidy weight row has the wrong width");
    if (!all_finite(row)) throw DataError("non-finite subsidy weight");
  }
  if (!all_finite(a) || !all_finite(b) || !all_finite(c0)) {
    throw DataError("non-finite simulation coefficient");
  }
}

nlohmann::ordered_json SimulationScenario::to_json() const {
  nlohmann::ordered_json j;
  j["inputs"] = inputs;
  j["subsidy_weights"] = subsidy_weights;
  j["a"] = a;
  j["b"] = b;
  j["c0"] = c0;
  return j;
}

SimulationScenario SimulationScenario::from_json(const nlohmann::json& j) {
  SimulationScenario s;
  try {
    s.inputs = j.at("inputs").get<std::size_t>();
    s.subsidy_weights = j.at("subsidy_weights").get<std::vector<std::vector<double>>>();
    s.a = j.at("a").get<std::vector<double>>();
    s.b = j.at("b").get<std::vector<double>>();
    s.c0 = j.at("c0").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed simulation scenario: ") + e.what());
  }
  s.validate();
  return s;
}

double simulation_step(double a, double b, double c0, double signal, double z) {
  return sigmoid(a * signal + b * z + c0);
}

double simulate_conversion(double a, double b, double c0, double signal) {
  constexpr int kMaxIterations = 1000;
  double z = 0.5;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double next = simulation_step(a, b, c0, signal, z);
    if (std::abs(next - z) <= 1e-12) return next;
    z = 0.5 * z + 0.5 * next;
  }
  std::ostringstream msg;
  msg << "simulation fixed point did not converge in " << kMaxIterations
      << " iterations (a=" << a << ", b=" << b << ", c0=" << c0 << ")";
  throw SolverError(msg.str());
}

std::shared_ptr<OpaqueBackbone> simulation_backbone(const SimulationScenario& scenario) {
  scenario.validate();
  auto fn = [scenario](std::span<const double> x) {
    CostVector out(scenario.cities());
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double signal = dot(scenario.subsidy_weights[j], x);
      out[j] = simulate_conversion(scenario.a[j], scenario.b[j], scenario.c0[j], signal);
    }
    return out;
  };
  return std::make_shared<OpaqueBackbone>(std::move(fn), scenario.inputs, scenario.cities(),
                                          "simulation model");
}

}  // namespace dff
