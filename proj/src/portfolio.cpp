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
#include <sstream>

#include "dff/error.hpp"
#include "dff/oracle.hpp"

namespace dff {

namespace {

constexpr double kMappingTolerance = 1e-8;
constexpr int kMaxInnerIterations = 10000;
constexpr int kMaxBisectionSteps = 200;

double power_iteration_max_eigenvalue(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double estimate = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd av = a * v;
    const double norm = av.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(av);
    v = av / norm;
    if (std::abs(next - estimate) <= 1e-13 * std::max(1.0, std::abs(next))) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate;
}

}  // namespace

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) tau = candidate;
  }
  return (v.array() - tau).max(0.0).matrix();
}

void PortfolioInstance::validate() const {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols()) {
    throw DataError("portfolio covariance must be a nonempty square matrix");
  }
  if (!sigma.allFinite()) throw DataError("portfolio covariance has non-finite entries");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DataError("portfolio covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    std::ostringstream msg;
    msg << "portfolio covariance is not PSD (min eigenvalue " << eig.eigenvalues().minCoeff()
        << ")";
    throw DataError(msg.str());
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DataError("risk budget gamma must be positive");
}

double PortfolioKkt::max() const {
  return std::max({stationarity, primal, dual, complementarity});
}

PortfolioOracle::PortfolioOracle(PortfolioInstance instance) : instance_(std::move(instance)) {
  instance_.validate();
  max_eig_ = power_iteration_max_eigenvalue(instance_.sigma);
}

PortfolioOracle::InnerResult PortfolioOracle::solve_inner(const Eigen::VectorXd& c, double lambda,
                                                          Eigen::VectorXd w) const {
  // Power iteration approaches lambda_max from below; the small inflation keeps
  // 1/L a safe step.
  const double lipschitz = 2.0 * lambda * max_eig_ * (1.0 + 1e-6) + 1.0;
  InnerResult out;
  for (int it = 0; it < kMaxInnerIterations; ++it) {
    const Eigen::VectorXd grad = c - 2.0 * lambda * (instance_.sigma * w);
    Eigen::VectorXd next = project_simplex(w + grad / lipschitz);
    const double mapping = lipschitz * (next - w).norm();
    w = std::move(next);
    out.iterations = it + 1;
    out.mapping_norm = mapping;
    if (mapping <= kMappingTolerance) break;
  }
  out.w = std::move(w);
  return out;
}

double PortfolioOracle::minimal_risk() const {
  const Eigen::Index n = instance_.sigma.rows();
  const Eigen::VectorXd start = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const InnerResult r = solve_inner(Eigen::VectorXd::Zero(n), 1.0, start);
  return risk(r.w);
}

PortfolioKkt PortfolioOracle::kkt_residuals(std::span<const double> c, std::span<const double> w,
                                            double lambda) const {
  const Eigen::Index n = instance_.sigma.rows();
  const Eigen::Map<const Eigen::VectorXd> cv(c.data(), n);
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), n);
  const Eigen::VectorXd grad = cv - 2.0 * lambda * (instance_.sigma * wv);
  const double r = risk(wv);

  PortfolioKkt kkt;
  // Unit-step gradient mapping of the Lagrangian over the simplex; zero iff
  // the simplex-restricted stationarity conditions hold.
  kkt.stationarity = (wv - project_simplex(wv + grad)).norm();
  kkt.primal = std::max({0.0, r - instance_.gamma, -wv.minCoeff(), std::abs(wv.sum() - 1.0)});
  kkt.dual = std::max(0.0, -lambda);
  kkt.complementarity = std::abs(lambda * (r - instance_.gamma));
  return kkt;
}

OracleSolution PortfolioOracle::solve(std::span<const double> c) const {
  check_dim(c);
  const Eigen::Index n = instance_.sigma.rows();
  const Eigen::Map<const Eigen::VectorXd> cv(c.data(), n);
  const double gamma = instance_.gamma;

  int inner_iterations = 0;
  bool converged = true;
  auto inner = [&](double lambda, const Eigen::VectorXd& start) {
    InnerResult r = solve_inner(cv, lambda, start);
    inner_iterations += r.iterations;
    return r;
  };

  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  InnerResult best = inner(0.0, uniform);
  double lambda = 0.0;
  int bisection_steps = 0;

  if (risk(best.w) > gamma) {
    const double min_risk = minimal_risk();
    if (min_risk > gamma * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "portfolio infeasible: minimal risk on the simplex is " << min_risk
          << " but gamma is " << gamma;
      throw SolverError(msg.str());
    }
    double lo = 0.0;
    double hi = 1.0;
    InnerResult at_hi = inner(hi, best.w);
    while (risk(at_hi.w) > gamma) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e15) throw SolverError("portfolio risk multiplier failed to bracket gamma");
      at_hi = inner(hi, at_hi.w);
    }
    // Bisection keeps `hi` feasible; stop once complementary slackness is met.
    while (bisection_steps < kMaxBisectionSteps) {
      if (hi * (gamma - risk(at_hi.w)) <= 1e-10) break;
      if (hi - lo <= 1e-15 * hi) break;
      const double mid = 0.5 * (lo + hi);
      InnerResult at_mid = inner(mid, at_hi.w);
      ++bisection_steps;
      if (risk(at_mid.w) > gamma) {
        lo = mid;
      } else {
        hi = mid;
        at_hi = std::move(at_mid);
      }
    }
    best = std::move(at_hi);
    lambda = hi;
  }
  converged = best.mapping_norm <= kMappingTolerance;

  OracleSolution sol;
  sol.w.assign(best.w.data(), best.w.data() + n);
  sol.objective = dot(c, sol.w);
  const PortfolioKkt kkt = kkt_residuals(c, sol.w, lambda);
  sol.optimal = converged && kkt.max() <= 1e-6;
  sol.diagnostics["lambda"] = lambda;
  sol.diagnostics["risk"] = risk(best.w);
  sol.diagnostics["inner_iterations"] = inner_iterations;
  sol.diagnostics["bisection_steps"] = bisection_steps;
  sol.diagnostics["gradient_mapping"] = best.mapping_norm;
  sol.diagnostics["kkt_stationarity"] = kkt.stationarity;
  sol.diagnostics["kkt_primal"] = kkt.primal;
  sol.diagnostics["kkt_dual"] = kkt.dual;
  sol.diagnostics["kkt_complementarity"] = kkt.complementarity;
  return sol;
}

nlohmann::ordered_json PortfolioOracle::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "portfolio";
  std::vector<std::vector<double>> rows(instance_.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows.size(); ++c) rows[r].push_back(instance_.sigma(r, c));
  }
  j["sigma"] = rows;
  j["gamma"] = instance_.gamma;
  return j;
}

}  // namespace dff
