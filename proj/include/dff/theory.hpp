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

// Executable checks of the trust-region construction and its consequences,
// the least-squares bias demonstration and prediction-distribution
// diagnostics.

#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dff/backbone.hpp"
#include "dff/core.hpp"
#include "dff/oracle.hpp"
#include "json.hpp"

namespace dff {

/// (eps / sqrt(d)) * ||c_hat||: how far the RMSE of a corrected prediction
/// can exceed that of the backbone prediction.
double rmse_increment_bound(std::span<const double> c_hat, double eps);

struct CosineCheck {
  double cosine = 1.0;
  double bound = 1.0;
  bool ok = true;
};
/// cos(c_tilde, c_hat) against sqrt(1 - eps^2). Requires eps <= 1 and
/// nonzero vectors.
CosineCheck cosine_check(std::span<const double> c_tilde, std::span<const double> c_hat,
                         double eps);

struct TrustRegionCheck {
  bool ok = true;
  std::size_t violations = 0;
  /// max_i |c_tilde_i - c_hat_i| / |c_hat_i| over coordinates with c_hat_i != 0.
  double worst_ratio = 0.0;
};
/// |c_tilde_i - c_hat_i| <= eps |c_hat_i| per coordinate.
TrustRegionCheck trust_region_check(std::span<const double> c_tilde,
                                    std::span<const double> c_hat, double eps);

struct SampleBound {
  double rmse_backbone = 0.0;
  double rmse_corrected = 0.0;
  double increment = 0.0;
  double bound = 0.0;
  double cosine = 1.0;
  double cosine_bound = 1.0;
  bool cosine_checked = false;
  double trust_ratio = 0.0;
  bool rmse_ok = true;
  bool cosine_ok = true;
  bool trust_ok = true;
};

struct BoundReport {
  double epsilon = 0.0;
  std::vector<SampleBound> samples;
  std::size_t rmse_violations = 0;
  std::size_t cosine_violations = 0;
  std::size_t trust_violations = 0;
  double min_rmse_slack = 0.0;    // min over samples of bound - increment
  double min_cosine_slack = 0.0;  // min over checked samples of cosine - bound

  std::size_t violations() const { return rmse_violations + cosine_violations + trust_violations; }
};

/// Per-sample checks with tolerance 1e-12. The cosine check is skipped for
/// eps > 1 and for zero vectors.
BoundReport bound_report(std::span<const CostVector> corrected, std::span<const CostVector> backbone,
                         std::span<const CostVector> truth, double eps);
/// One row per sample.
void write_bounds_csv(const std::filesystem::path& path, const BoundReport& report);

/// Upper bound on MSE(corrected) - MSE(backbone) implied by the per-sample
/// RMSE bound: mean_i (RMSE_i + bound_i)^2 - mean_i RMSE_i^2.
double mse_ceiling(std::span<const CostVector> backbone, std::span<const CostVector> truth,
                   double eps);

using WeightGenerator = std::function<Eigen::MatrixXd(std::size_t index, const Sample& sample)>;

struct GlsBiasReport {
  LinearModel ols;
  LinearModel gls;
  Eigen::MatrixXd divergence;  // gls.beta - ols.beta
  double max_abs_divergence = 0.0;
  double ndr_ols = 0.0;
  double ndr_gls = 0.0;
};

/// Fits the plain and the decision-weighted closed forms on `data` and
/// reports how far apart they land and the NDR of each on `eval`.
GlsBiasReport gls_bias_demo(const Dataset& data, const WeightGenerator& weights,
                            const DecisionOracle& oracle, const Dataset& eval);

/// Empirical 1-d Wasserstein distance between two samples.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

struct DistributionReport {
  std::vector<double> edges;
  Histogram truth;
  std::map<std::string, Histogram> methods;
  std::map<std::string, double> wasserstein;
};

/// Pools every coordinate of every sample, bins all methods on one shared
/// range, and measures each method's distance to the pooled truth.
DistributionReport distribution_report(
    const std::map<std::string, std::vector<CostVector>>& predictions,
    std::span<const CostVector> truth, std::size_t bins = 40);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist);

}  // namespace dff
