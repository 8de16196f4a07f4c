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

// The bias-correction layer c_tilde = phi(x) * c_hat (+ b(x)) and the plain
// multilayer perceptron underneath it. Gradients are computed by hand.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dff/core.hpp"
#include "json.hpp"

namespace dff {

/// Fully connected ReLU network. Parameters live in one flat vector, layer by
/// layer, each layer storing its weight matrix row-major (out x in) followed
/// by its bias. The output layer is linear.
class Mlp {
 public:
  struct Trace {
    std::vector<std::vector<double>> activations;  // [0] is the input
    std::vector<std::vector<double>> pre;          // pre-activation per layer
  };

  Mlp() = default;
  Mlp(std::size_t inputs, std::vector<std::size_t> hidden, std::size_t outputs);

  std::size_t inputs() const noexcept { return widths_.front(); }
  std::size_t outputs() const noexcept { return widths_.back(); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t num_params() const noexcept { return params_.size(); }

  /// He-uniform hidden layers, zero biases. The output layer is either zero or
  /// uniform with bound sqrt(3 / fan_in).
  void init(std::uint64_t seed, bool zero_output);

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  std::vector<double> forward(std::span<const double> x, Trace* trace = nullptr) const;
  /// Adds d(v^T out)/d(theta) to `grad`.
  void backward(const Trace& trace, std::span<const double> v, std::span<double> grad) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<std::size_t> widths_{0};
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

enum class BiasMode { kZero, kLearned };

struct CorrectionConfig {
  std::size_t p = 0;
  std::size_t d = 0;
  std::vector<std::size_t> hidden{32, 32, 32};
  double epsilon = 0.5;
  BiasMode bias_mode = BiasMode::kZero;
};

/// Feature standardization applied before the network sees x.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  /// Training-set mean and standard deviation; near-constant columns keep
  /// scale 1.
  static FeatureScaler fit(const Dataset& data);
  static FeatureScaler identity(std::size_t p);
  std::vector<double> apply(std::span<const double> x) const;
};

class CorrectionNet;

struct ForwardTrace {
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
  Mlp::Trace mlp;
  std::vector<double> h;
  std::vector<double> phi;
  std::vector<double> c_hat;
  std::vector<double> c_tilde;
};

/// F(x) = phi(x) * c_hat + b(x) with phi = 1 + eps * tanh(h(x) / 2), which is
/// the same function as (1 - eps) + 2 eps sigmoid(h). tanh is clamped to
/// +-(1 - 2^-20) so |phi - 1| < eps survives rounding.
class CorrectionNet {
 public:
  CorrectionNet() = default;
  CorrectionNet(const CorrectionConfig& config, std::uint64_t seed);

  const CorrectionConfig& config() const noexcept { return config_; }
  double epsilon() const noexcept { return config_.epsilon; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t num_params() const noexcept { return mlp_.num_params(); }

  const FeatureScaler& scaler() const noexcept { return scaler_; }
  void set_scaler(FeatureScaler scaler);

  std::span<const double> params() const noexcept { return mlp_.params(); }
  /// Mutable view; invalidates outstanding traces.
  std::span<double> mutable_params();
  void set_params(std::span<const double> theta);

  std::vector<double> phi(std::span<const double> x) const;
  std::vector<double> forward(std::span<const double> x, std::span<const double> c_hat,
                              ForwardTrace* trace = nullptr) const;
  /// Gradient of c_tilde^T v with respect to theta. c_hat is a constant.
  std::vector<double> backward(const ForwardTrace& trace, std::span<const double> v) const;

  nlohmann::ordered_json header() const;
  /// JSON header line, then one parameter per line.
  void save(const std::filesystem::path& path) const;
  static CorrectionNet load(const std::filesystem::path& path);

 private:
  void touch();

  CorrectionConfig config_;
  std::uint64_t seed_ = 0;
  FeatureScaler scaler_;
  Mlp mlp_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace dff
