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
#include <atomic>
#include <cmath>
#include <fstream>

#include "dff/correction.hpp"
#include "dff/error.hpp"

namespace dff {

namespace {

constexpr double kTanhLimit = 1.0 - 0x1.0p-20;

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

const char* bias_mode_name(BiasMode mode) { return mode == BiasMode::kZero ? "zero" : "learned"; }

}  // namespace

FeatureScaler FeatureScaler::fit(const Dataset& data) {
  FeatureScaler s = identity(data.p());
  if (data.empty()) return s;
  const double n = static_cast<double>(data.size());
  for (std::size_t k = 0; k < data.p(); ++k) {
    double mean = 0.0;
    for (const auto& sample : data.samples()) mean += sample.x[k];
    mean /= n;
    double var = 0.0;
    for (const auto& sample : data.samples()) var += (sample.x[k] - mean) * (sample.x[k] - mean);
    const double sd = std::sqrt(var / n);
    s.mean[k] = mean;
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

FeatureScaler FeatureScaler::identity(std::size_t p) {
  return FeatureScaler{std::vector<double>(p, 0.0), std::vector<double>(p, 1.0)};
}

std::vector<double> FeatureScaler::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) throw DataError("feature vector has the wrong width");
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

CorrectionNet::CorrectionNet(const CorrectionConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed), scaler_(FeatureScaler::identity(config.p)), id_(next_net_id()) {
  if (config.p == 0 || config.d == 0) throw UsageError("correction net needs p, d >= 1");
  if (!(config.epsilon >= 0.0) || !std::isfinite(config.epsilon)) {
    throw UsageError("epsilon must be a finite nonnegative number");
  }
  const std::size_t outputs = config.bias_mode == BiasMode::kZero ? config.d : 2 * config.d;
  mlp_ = Mlp(config.p, config.hidden, outputs);
  mlp_.init(seed, /*zero_output=*/true);
}

void CorrectionNet::set_scaler(FeatureScaler scaler) {
  if (scaler.mean.size() != config_.p || scaler.scale.size() != config_.p) {
    throw DataError("scaler width does not match the net");
  }
  for (double s : scaler.scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DataError("feature scale must be positive");
  }
  scaler_ = std::move(scaler);
  touch();
}

void CorrectionNet::touch() { ++version_; }

std::span<double> CorrectionNet::mutable_params() {
  touch();
  return mlp_.params();
}

void CorrectionNet::set_params(std::span<const double> theta) {
  if (theta.size() != num_params()) throw DataError("parameter vector has the wrong size");
  std::copy(theta.begin(), theta.end(), mlp_.params().begin());
  touch();
}

std::vector<double> CorrectionNet::phi(std::span<const double> x) const {
  const std::vector<double> h = mlp_.forward(scaler_.apply(x));
  std::vector<double> out(config_.d);
  for (std::size_t i = 0; i < config_.d; ++i) {
    const double t = std::clamp(std::tanh(0.5 * h[i]), -kTanhLimit, kTanhLimit);
    out[i] = 1.0 + config_.epsilon * t;
  }
  return out;
}

std::vector<double> CorrectionNet::forward(std::span<const double> x, std::span<const double> c_hat,
                                           ForwardTrace* trace) const {
  if (c_hat.size() != config_.d) throw DataError("backbone prediction has the wrong width");
  Mlp::Trace local;
  const std::vector<double> out = mlp_.forward(scaler_.apply(x), trace ? &trace->mlp : &local);
  std::vector<double> phi(config_.d);
  std::vector<double> c_tilde(config_.d);
  const bool learned = config_.bias_mode == BiasMode::kLearned;
  for (std::size_t i = 0; i < config_.d; ++i) {
    const double t = std::clamp(std::tanh(0.5 * out[i]), -kTanhLimit, kTanhLimit);
    phi[i] = 1.0 + config_.epsilon * t;
    c_tilde[i] = phi[i] * c_hat[i];
    if (learned) c_tilde[i] += out[config_.d + i];
  }
  if (trace) {
    trace->net_id = id_;
    trace->version = version_;
    trace->h.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(config_.d));
    trace->phi = phi;
    trace->c_hat.assign(c_hat.begin(), c_hat.end());
    trace->c_tilde = c_tilde;
  }
  return c_tilde;
}

std::vector<double> CorrectionNet::backward(const ForwardTrace& trace,
                                            std::span<const double> v) const {
  if (trace.net_id != id_ || trace.version != version_) {
    throw UsageError("stale forward trace: parameters changed since the forward pass");
  }
  if (v.size() != config_.d) throw DataError("output gradient has the wrong width");
  const bool learned = config_.bias_mode == BiasMode::kLearned;
  std::vector<double> dout(learned ? 2 * config_.d : config_.d, 0.0);
  for (std::size_t i = 0; i < config_.d; ++i) {
    const double th = std::tanh(0.5 * trace.h[i]);
    const bool clamped = std::abs(th) > kTanhLimit;
    const double slope = clamped ? 0.0 : 0.5 * config_.epsilon * (1.0 - th * th);
    dout[i] = v[i] * trace.c_hat[i] * slope;
    if (learned) dout[config_.d + i] = v[i];
  }
  std::vector<double> grad(num_params(), 0.0);
  mlp_.backward(trace.mlp, dout, grad);
  return grad;
}

nlohmann::ordered_json CorrectionNet::header() const {
  nlohmann::ordered_json j;
  j["format"] = "dff-correction";
  j["version"] = 1;
  j["p"] = config_.p;
  j["d"] = config_.d;
  j["hidden"] = config_.hidden;
  j["epsilon"] = config_.epsilon;
  j["bias_mode"] = bias_mode_name(config_.bias_mode);
  j["seed"] = seed_;
  j["feature_mean"] = scaler_.mean;
  j["feature_scale"] = scaler_.scale;
  j["num_params"] = num_params();
  return j;
}

void CorrectionNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << header().dump() << '\n';
  for (double v : params()) out << format_double(v) << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

CorrectionNet CorrectionNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty checkpoint " + path.string());
  nlohmann::json h;
  CorrectionConfig config;
  std::uint64_t seed = 0;
  FeatureScaler scaler;
  std::size_t count = 0;
  try {
    h = nlohmann::json::parse(line);
    if (h.at("format") != "dff-correction" || h.at("version") != 1) {
      throw DataError("not a correction checkpoint: " + path.string());
    }
    config.p = h.at("p").get<std::size_t>();
    config.d = h.at("d").get<std::size_t>();
    config.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    config.epsilon = h.at("epsilon").get<double>();
    const std::string mode = h.at("bias_mode").get<std::string>();
    if (mode != "zero" && mode != "learned") throw DataError("unknown bias mode '" + mode + "'");
    config.bias_mode = mode == "zero" ? BiasMode::kZero : BiasMode::kLearned;
    seed = h.at("seed").get<std::uint64_t>();
    scaler.mean = h.at("feature_mean").get<std::vector<double>>();
    scaler.scale = h.at("feature_scale").get<std::vector<double>>();
    count = h.at("num_params").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  CorrectionNet net(config, seed);
  net.set_scaler(std::move(scaler));
  if (count != net.num_params()) throw DataError("checkpoint parameter count mismatch");
  std::vector<double> theta;
  theta.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    theta.push_back(parse_double(line));
  }
  if (theta.size() != count) throw DataError("checkpoint holds the wrong number of parameters");
  net.set_params(theta);
  return net;
}

}  // namespace dff
