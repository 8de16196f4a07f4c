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
#include <fstream>
#include <limits>

#include "dff/error.hpp"
#include "dff/theory.hpp"

namespace dff {

namespace {

constexpr double kTolerance = 1e-12;

double rmse_of(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

double rmse_increment_bound(std::span<const double> c_hat, double eps) {
  if (c_hat.empty()) throw DataError("bound needs a nonempty prediction");
  if (!(eps >= 0.0)) throw UsageError("epsilon must be nonnegative");
  return eps / std::sqrt(static_cast<double>(c_hat.size())) * norm2(c_hat);
}

CosineCheck cosine_check(std::span<const double> c_tilde, std::span<const double> c_hat,
                         double eps) {
  if (c_tilde.size() != c_hat.size()) throw DataError("cosine check: length mismatch");
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("cosine bound needs 0 <= epsilon <= 1");
  const double na = norm2(c_tilde);
  const double nb = norm2(c_hat);
  if (na == 0.0 || nb == 0.0) throw DataError("cosine check: zero-norm vector");
  CosineCheck out;
  out.cosine = dot(c_tilde, c_hat) / (na * nb);
  out.bound = std::sqrt(1.0 - eps * eps);
  out.ok = out.cosine >= out.bound - kTolerance;
  return out;
}

TrustRegionCheck trust_region_check(std::span<const double> c_tilde,
                                    std::span<const double> c_hat, double eps) {
  if (c_tilde.size() != c_hat.size()) throw DataError("trust region check: length mismatch");
  TrustRegionCheck out;
  for (std::size_t i = 0; i < c_hat.size(); ++i) {
    const double gap = std::abs(c_tilde[i] - c_hat[i]);
    const double room = eps * std::abs(c_hat[i]);
    if (!(gap <= room)) ++out.violations;
    if (c_hat[i] != 0.0) out.worst_ratio = std::max(out.worst_ratio, gap / std::abs(c_hat[i]));
  }
  out.ok = out.violations == 0;
  return out;
}

BoundReport bound_report(std::span<const CostVector> corrected, std::span<const CostVector> backbone,
                         std::span<const CostVector> truth, double eps) {
  if (corrected.size() != backbone.size() || corrected.size() != truth.size()) {
    throw DataError("bound report: expected matching sample counts");
  }
  BoundReport rep;
  rep.epsilon = eps;
  rep.min_rmse_slack = std::numeric_limits<double>::infinity();
  rep.min_cosine_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    const auto& ct = corrected[i];
    const auto& ch = backbone[i];
    const auto& c = truth[i];
    if (ct.size() != ch.size() || ct.size() != c.size()) {
      throw DataError("bound report: length mismatch at sample " + std::to_string(i));
    }
    SampleBound s;
    s.rmse_backbone = rmse_of(ch, c);
    s.rmse_corrected = rmse_of(ct, c);
    s.increment = s.rmse_corrected - s.rmse_backbone;
    s.bound = rmse_increment_bound(ch, eps);
    s.rmse_ok = s.increment <= s.bound + kTolerance;
    rep.min_rmse_slack = std::min(rep.min_rmse_slack, s.bound - s.increment);
    if (eps <= 1.0 && norm2(ct) > 0.0 && norm2(ch) > 0.0) {
      const CosineCheck cc = cosine_check(ct, ch, eps);
      s.cosine_checked = true;
      s.cosine = cc.cosine;
      s.cosine_bound = cc.bound;
      s.cosine_ok = cc.ok;
      rep.min_cosine_slack = std::min(rep.min_cosine_slack, cc.cosine - cc.bound);
    }
    const TrustRegionCheck tr = trust_region_check(ct, ch, eps);
    s.trust_ratio = tr.worst_ratio;
    s.trust_ok = tr.ok;
    rep.rmse_violations += s.rmse_ok ? 0 : 1;
    rep.cosine_violations += s.cosine_ok ? 0 : 1;
    rep.trust_violations += tr.violations;
    rep.samples.push_back(s);
  }
  if (rep.samples.empty()) rep.min_rmse_slack = 0.0;
  if (!std::isfinite(rep.min_cosine_slack)) rep.min_cosine_slack = 0.0;
  return rep;
}

void write_bounds_csv(const std::filesystem::path& path, const BoundReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample,rmse_backbone,rmse_corrected,increment,bound,cosine,cosine_bound,trust_ratio,"
         "rmse_ok,cosine_ok,trust_ok\n";
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    const SampleBound& s = report.samples[i];
    out << i << ',' << format_double(s.rmse_backbone) << ',' << format_double(s.rmse_corrected)
        << ',' << format_double(s.increment) << ',' << format_double(s.bound) << ','
        << (s.cosine_checked ? format_double(s.cosine) : "") << ','
        << (s.cosine_checked ? format_double(s.cosine_bound) : "") << ','
        << format_double(s.trust_ratio) << ',' << (s.rmse_ok ? 1 : 0) << ','
        << (s.cosine_ok ? 1 : 0) << ',' << (s.trust_ok ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

double mse_ceiling(std::span<const CostVector> backbone, std::span<const CostVector> truth,
                   double eps) {
  if (backbone.size() != truth.size()) throw DataError("mse ceiling: sample count mismatch");
  if (backbone.empty()) return 0.0;
  double widened = 0.0;
  double base = 0.0;
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    if (backbone[i].size() != truth[i].size()) throw DataError("mse ceiling: length mismatch");
    const double r = rmse_of(backbone[i], truth[i]);
    const double b = rmse_increment_bound(backbone[i], eps);
    widened += (r + b) * (r + b);
    base += r * r;
  }
  const double n = static_cast<double>(backbone.size());
  return widened / n - base / n;
}

GlsBiasReport gls_bias_demo(const Dataset& data, const WeightGenerator& weights,
                            const DecisionOracle& oracle, const Dataset& eval) {
  if (!weights) throw UsageError("weight generator is required");
  const Eigen::MatrixXd x = data.features();
  const Eigen::MatrixXd y = data.costs();
  std::vector<Eigen::MatrixXd> q;
  q.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) q.push_back(weights(i, data[i]));

  GlsBiasReport rep;
  rep.ols = fit_ols(x, y);
  rep.gls = fit_gls(x, y, q);
  rep.divergence = rep.gls.beta() - rep.ols.beta();
  rep.max_abs_divergence = rep.divergence.size() ? rep.divergence.cwiseAbs().maxCoeff() : 0.0;
  if (!eval.empty()) {
    rep.ndr_ols = normalized_decision_regret(oracle, eval, predict_all(rep.ols, eval));
    rep.ndr_gls = normalized_decision_regret(oracle, eval, predict_all(rep.gls, eval));
  }
  return rep;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DataError("wasserstein distance needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  // integrate |F_a - F_b| between consecutive points of the merged support
  std::size_t i = 0;
  std::size_t j = 0;
  double prev = std::min(a.front(), b.front());
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    total += (next - prev) * std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb);
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
    prev = next;
  }
  return total;
}

namespace {

std::vector<double> pool(std::span<const CostVector> rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

Histogram bin_values(const std::vector<double>& values, const std::vector<double>& edges) {
  Histogram h;
  h.edges = edges;
  const std::size_t bins = edges.size() - 1;
  h.counts.assign(bins, 0);
  const double lo = edges.front();
  const double width = edges.back() - lo;
  for (double v : values) {
    auto k = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width * static_cast<double>(bins)));
    k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(k)];
  }
  return h;
}

}  // namespace

DistributionReport distribution_report(
    const std::map<std::string, std::vector<CostVector>>& predictions,
    std::span<const CostVector> truth, std::size_t bins) {
  if (bins < 1) throw UsageError("histogram needs at least one bin");
  const std::vector<double> truth_values = pool(truth);
  if (truth_values.empty()) throw DataError("distribution report needs truth values");
  std::map<std::string, std::vector<double>> pooled;
  double lo = *std::min_element(truth_values.begin(), truth_values.end());
  double hi = *std::max_element(truth_values.begin(), truth_values.end());
  for (const auto& [name, rows] : predictions) {
    auto values = pool(rows);
    if (values.empty()) continue;
    lo = std::min(lo, *std::min_element(values.begin(), values.end()));
    hi = std::max(hi, *std::max_element(values.begin(), values.end()));
    pooled.emplace(name, std::move(values));
  }
  if (!(hi > lo)) hi = lo + 1.0;
  DistributionReport rep;
  rep.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    rep.edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  }
  rep.edges.back() = hi;
  rep.truth = bin_values(truth_values, rep.edges);
  for (auto& [name, values] : pooled) {
    rep.methods.emplace(name, bin_values(values, rep.edges));
    rep.wasserstein.emplace(name, wasserstein_1d(values, truth_values));
  }
  return rep;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin_left,bin_right,count\n";
  for (std::size_t k = 0; k < hist.counts.size(); ++k) {
    out << format_double(hist.edges[k]) << ',' << format_double(hist.edges[k + 1]) << ','
        << hist.counts[k] << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace dff
