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

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dff/error.hpp"
#include "dff/training.hpp"

namespace dff {

double mse_loss(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DataError("mse: length mismatch");
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  return std::sqrt(mse_loss(pred, truth));
}

double batch_mse(std::span<const CostVector> pred, std::span<const CostVector> truth) {
  if (pred.size() != truth.size()) throw DataError("mse: expected one prediction per sample");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size()) throw DataError("mse: length mismatch");
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      s += (pred[i][j] - truth[i][j]) * (pred[i][j] - truth[i][j]);
    }
    count += pred[i].size();
  }
  return count ? s / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------

SpoPlusResult spo_plus(const DecisionOracle& oracle, std::span<const double> c_tilde,
                       std::span<const double> c, const OracleSolution* truth) {
  const std::size_t d = oracle.dim();
  if (c_tilde.size() != d || c.size() != d) throw DataError("spo+: dimension mismatch");
  const double s = sense_sign(oracle.sense());
  OracleSolution local;
  if (!truth) {
    local = oracle.solve(c);
    truth = &local;
  }
  // q = 2 k_tilde - k in canonical (minimization) costs
  std::vector<double> q(d);
  for (std::size_t i = 0; i < d; ++i) q[i] = s * (2.0 * c_tilde[i] - c[i]);
  const OracleSolution at_q = oracle.solve_canonical(q);

  SpoPlusResult out;
  out.gradient.resize(d);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < d; ++i) {
    diff[i] = truth->w[i] - at_q.w[i];
    out.gradient[i] = 2.0 * s * diff[i];
  }
  // max_w (k - 2 k_tilde)^T w + 2 k_tilde^T w*(k) - k^T w*(k) = q^T (w*(k) - w*(q))
  out.loss = dot(q, diff);
  return out;
}

double spo_plus_loss(const DecisionOracle& oracle, std::span<const double> c_tilde,
                     std::span<const double> c, const OracleSolution* truth) {
  return spo_plus(oracle, c_tilde, c, truth).loss;
}

std::vector<double> spo_plus_subgradient(const DecisionOracle& oracle,
                                         std::span<const double> c_tilde,
                                         std::span<const double> c, const OracleSolution* truth) {
  return spo_plus(oracle, c_tilde, c, truth).gradient;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& config) {
  if (params.size() != grads.size()) throw DataError("adam: gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw DataError("adam: state size mismatch");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be positive");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (patience < 1) throw UsageError("patience must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("moment coefficients must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw UsageError("optimizer stabilizer must be positive");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw UsageError("epsilon must be nonnegative");
}

nlohmann::ordered_json TrainReport::to_json(bool include_timing) const {
  nlohmann::ordered_json j;
  j["epochs_run"] = epochs_run;
  j["best_epoch"] = best_epoch;
  j["stop_metric"] = stop_metric;
  j["train_loss"] = train_loss;
  j["val_ndr"] = val_ndr;
  j["val_mse"] = val_mse;
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

namespace {

std::vector<OracleSolution> solve_all(const DecisionOracle& oracle, const Dataset& data) {
  std::vector<OracleSolution> out;
  out.reserve(data.size());
  for (const auto& s : data.samples()) out.push_back(oracle.solve(s.c));
  return out;
}

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
  throw Error(e.kind(), context + ": " + e.what());
}

struct Validation {
  const DecisionOracle& oracle;
  std::vector<CostVector> truth;
  std::vector<OracleSolution> optimal;

  Validation(const DecisionOracle& o, const Dataset& val)
      : oracle(o), truth(val.cost_vectors()), optimal(solve_all(o, val)) {}

  double ndr(std::span<const CostVector> preds) const {
    return summarize_regret(oracle, truth, optimal, preds).normalized();
  }
  double mse(std::span<const CostVector> preds) const { return batch_mse(preds, truth); }
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

DffResult train_dff(std::span<const CostVector> train_preds, const Dataset& train,
                    std::span<const CostVector> val_preds, const Dataset& val,
                    const DecisionOracle& oracle, const TrainConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (train.empty()) throw DataError("fine-tuning needs training samples");
  if (val.empty()) throw UsageError("fine-tuning needs a nonempty validation split");
  if (train_preds.size() != train.size() || val_preds.size() != val.size()) {
    throw DataError("expected one backbone prediction per sample");
  }
  if (train.d() != oracle.dim()) throw DataError("dataset cost width does not match the oracle");

  CorrectionConfig cc{train.p(), train.d(), config.hidden, config.epsilon, config.bias_mode};
  CorrectionNet net(cc, derive_seed(config.seed, "dff-init"));
  net.set_scaler(FeatureScaler::fit(train));

  const std::vector<OracleSolution> optimal = solve_all(oracle, train);
  const Validation validation(oracle, val);

  auto evaluate = [&](TrainReport& rep) {
    std::vector<CostVector> preds;
    preds.reserve(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) preds.push_back(net.forward(val[i].x, val_preds[i]));
    rep.val_ndr.push_back(validation.ndr(preds));
    rep.val_mse.push_back(validation.mse(preds));
  };

  TrainReport report;
  report.stop_metric = "val_ndr";
  {
    double loss = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      loss += spo_plus_loss(oracle, net.forward(train[i].x, train_preds[i]), train[i].c, &optimal[i]);
    }
    report.train_loss.push_back(loss / static_cast<double>(train.size()));
  }
  evaluate(report);

  std::vector<double> best_params(net.params().begin(), net.params().end());
  double best = report.val_ndr.front();
  std::size_t stale = 0;
  AdamState adam;
  Rng rng(derive_seed(config.seed, "dff-shuffle"));
  std::vector<double> grad(net.num_params());
  ForwardTrace trace;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = make_batches(train.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(batches[b].size());
      try {
        for (std::size_t i : batches[b]) {
          const auto c_tilde = net.forward(train[i].x, train_preds[i], &trace);
          const SpoPlusResult r = spo_plus(oracle, c_tilde, train[i].c, &optimal[i]);
          loss_sum += r.loss;
          const auto g = net.backward(trace, r.gradient);
          for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += inv * g[k];
        }
      } catch (const Error& e) {
        rethrow_with_context(e, "fine-tuning epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(b));
      }
      adam_step(adam, net.mutable_params(), grad, config.adam());
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    evaluate(report);
    report.epochs_run = epoch;
    if (report.val_ndr.back() < best) {
      best = report.val_ndr.back();
      report.best_epoch = epoch;
      best_params.assign(net.params().begin(), net.params().end());
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  net.set_params(best_params);
  report.wall_seconds = seconds_since(t0);
  return DffResult{std::move(net), std::move(report)};
}

// ---------------------------------------------------------------------------

NnPredictor::NnPredictor(Mlp mlp, FeatureScaler inputs, std::vector<double> out_mean,
                         std::vector<double> out_scale)
    : mlp_(std::move(mlp)),
      inputs_(std::move(inputs)),
      out_mean_(std::move(out_mean)),
      out_scale_(std::move(out_scale)) {
  if (inputs_.mean.size() != mlp_.inputs() || out_mean_.size() != mlp_.outputs() ||
      out_scale_.size() != mlp_.outputs()) {
    throw DataError("network scaling does not match its widths");
  }
}

CostVector NnPredictor::predict(std::span<const double> x) const {
  CostVector out = mlp_.forward(inputs_.apply(x));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = out_mean_[j] + out_scale_[j] * out[j];
  return out;
}

void NnPredictor::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write network " + path.string());
  nlohmann::ordered_json h;
  h["format"] = "dff-nn";
  h["version"] = 1;
  h["widths"] = mlp_.widths();
  h["feature_mean"] = inputs_.mean;
  h["feature_scale"] = inputs_.scale;
  h["out_mean"] = out_mean_;
  h["out_scale"] = out_scale_;
  h["num_params"] = mlp_.num_params();
  out << h.dump() << '\n';
  for (double v : mlp_.params()) out << format_double(v) << '\n';
  if (!out) throw IoError("failed writing network " + path.string());
}

NnPredictor NnPredictor::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read network " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty network file " + path.string());
  std::vector<std::size_t> widths;
  FeatureScaler scaler;
  std::vector<double> out_mean;
  std::vector<double> out_scale;
  std::size_t count = 0;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format") != "dff-nn" || h.at("version") != 1) {
      throw DataError("not a network file: " + path.string());
    }
    widths = h.at("widths").get<std::vector<std::size_t>>();
    scaler.mean = h.at("feature_mean").get<std::vector<double>>();
    scaler.scale = h.at("feature_scale").get<std::vector<double>>();
    out_mean = h.at("out_mean").get<std::vector<double>>();
    out_scale = h.at("out_scale").get<std::vector<double>>();
    count = h.at("num_params").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed network header in " + path.string() + ": " + e.what());
  }
  if (widths.size() < 2) throw DataError("network needs at least two layers");
  Mlp mlp(widths.front(), std::vector<std::size_t>(widths.begin() + 1, widths.end() - 1),
          widths.back());
  if (mlp.num_params() != count) throw DataError("network parameter count mismatch");
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (k >= count) throw DataError("network file has too many parameters");
    mlp.params()[k++] = parse_double(line);
  }
  if (k != count) throw DataError("network file has too few parameters");
  return NnPredictor(std::move(mlp), std::move(scaler), std::move(out_mean), std::move(out_scale));
}

NnResult train_nn(const Dataset& train, const Dataset& val, const DecisionOracle& oracle,
                  NnLoss loss, const TrainConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (train.empty()) throw DataError("network training needs samples");
  if (val.empty()) throw UsageError("network training needs a nonempty validation split");
  if (train.d() != oracle.dim()) throw DataError("dataset cost width does not match the oracle");
  const std::size_t d = train.d();

  std::vector<double> out_mean(d, 0.0);
  std::vector<double> out_scale(d, 1.0);
  const double n = static_cast<double>(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (const auto& s : train.samples()) out_mean[j] += s.c[j];
    out_mean[j] /= n;
    double var = 0.0;
    for (const auto& s : train.samples()) var += (s.c[j] - out_mean[j]) * (s.c[j] - out_mean[j]);
    const double sd = std::sqrt(var / n);
    if (sd > 1e-12) out_scale[j] = sd;
  }
  Mlp mlp(train.p(), config.hidden, d);
  mlp.init(derive_seed(config.seed, "nn-init"), /*zero_output=*/true);
  auto model = std::make_shared<NnPredictor>(std::move(mlp), FeatureScaler::fit(train), out_mean,
                                             out_scale);

  const std::vector<OracleSolution> optimal =
      loss == NnLoss::kSpoPlus ? solve_all(oracle, train) : std::vector<OracleSolution>{};
  const Validation validation(oracle, val);

  TrainReport report;
  report.stop_metric = loss == NnLoss::kMse ? "val_mse" : "val_ndr";
  auto sample_loss = [&](std::size_t i, const CostVector& pred, std::vector<double>* grad_pred) {
    if (loss == NnLoss::kMse) {
      const double value = mse_loss(pred, train[i].c);
      if (grad_pred) {
        grad_pred->resize(d);
        for (std::size_t j = 0; j < d; ++j) {
          (*grad_pred)[j] = 2.0 * (pred[j] - train[i].c[j]) / static_cast<double>(d);
        }
      }
      return value;
    }
    SpoPlusResult r = spo_plus(oracle, pred, train[i].c, &optimal[i]);
    if (grad_pred) *grad_pred = std::move(r.gradient);
    return r.loss;
  };
  auto evaluate = [&]() {
    std::vector<CostVector> preds;
    preds.reserve(val.size());
    for (const auto& s : val.samples()) preds.push_back(model->predict(s.x));
    report.val_ndr.push_back(validation.ndr(preds));
    report.val_mse.push_back(validation.mse(preds));
    return loss == NnLoss::kMse ? report.val_mse.back() : report.val_ndr.back();
  };

  {
    double total = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      total += sample_loss(i, model->predict(train[i].x), nullptr);
    }
    report.train_loss.push_back(total / n);
  }
  double best = evaluate();
  std::vector<double> best_params(model->mlp().params().begin(), model->mlp().params().end());
  std::size_t stale = 0;
  AdamState adam;
  Rng rng(derive_seed(config.seed, "nn-shuffle"));
  Mlp& net = model->mutable_mlp();
  std::vector<double> grad(net.num_params());
  std::vector<double> grad_pred;
  Mlp::Trace trace;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double total = 0.0;
    const auto batches = make_batches(train.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(batches[b].size());
      try {
        for (std::size_t i : batches[b]) {
          std::vector<double> out = net.forward(model->inputs().apply(train[i].x), &trace);
          CostVector pred(d);
          for (std::size_t j = 0; j < d; ++j) pred[j] = out_mean[j] + out_scale[j] * out[j];
          total += sample_loss(i, pred, &grad_pred);
          for (std::size_t j = 0; j < d; ++j) grad_pred[j] *= inv * out_scale[j];
          net.backward(trace, grad_pred, grad);
        }
      } catch (const Error& e) {
        rethrow_with_context(e, "network training epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(b));
      }
      adam_step(adam, net.params(), grad, config.adam());
    }
    report.train_loss.push_back(total / n);
    report.epochs_run = epoch;
    const double metric = evaluate();
    if (metric < best) {
      best = metric;
      report.best_epoch = epoch;
      best_params.assign(net.params().begin(), net.params().end());
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  std::copy(best_params.begin(), best_params.end(), net.params().begin());
  report.wall_seconds = seconds_since(t0);
  return NnResult{std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------

DffPredictor::DffPredictor(std::shared_ptr<const Predictor> backbone, CorrectionNet net)
    : backbone_(std::move(backbone)), net_(std::move(net)) {
  if (!backbone_) throw UsageError("fine-tuned predictor needs a backbone");
  if (backbone_->input_dim() != net_.config().p || backbone_->output_dim() != net_.config().d) {
    throw DataError("correction net does not match the backbone dimensions");
  }
}

CostVector DffPredictor::predict(std::span<const double> x) const {
  const CostVector c_hat = dff::predict(*backbone_, x);
  return net_.forward(x, c_hat);
}

CostVector DffPredictor::correct(std::span<const double> x, std::span<const double> c_hat) const {
  return net_.forward(x, c_hat);
}

}  // namespace dff
