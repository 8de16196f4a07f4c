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

// Acceptance checks. Each criterion prints one PASS/FAIL line; the process
// exits nonzero if any selected criterion fails.
//
//   acceptance                 run all criteria
//   acceptance --criterion 4   run one

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dff/correction.hpp"
#include "dff/datagen.hpp"
#include "dff/experiment.hpp"
#include "dff/oracle.hpp"
#include "dff/training.hpp"
#include "support/reference.hpp"
#include "support/tempdir.hpp"

namespace {

using testing_support::TempDir;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> uniform_vec(dff::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vnorm(const std::vector<double>& a) { return std::sqrt(vdot(a, a)); }

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

// A correction net with parameters spread wide enough to reach saturation.
dff::CorrectionNet random_net(dff::Rng& rng, std::size_t p, std::size_t d, double eps,
                              std::uint64_t seed) {
  dff::CorrectionConfig cfg;
  cfg.p = p;
  cfg.d = d;
  cfg.epsilon = eps;
  cfg.hidden.assign(1 + rng.index(2), 2 + rng.index(6));
  dff::CorrectionNet net(cfg, seed);
  const double scale = rng.uniform(0.1, 4.0);
  std::vector<double> theta(net.num_params());
  for (auto& t : theta) t = scale * rng.normal();
  net.set_params(theta);
  return net;
}

std::vector<double> random_c_hat(dff::Rng& rng, std::size_t d) {
  std::vector<double> c(d);
  const double mag = std::pow(10.0, rng.uniform(-3.0, 3.0));
  for (auto& v : c) v = mag * rng.normal();
  return c;
}

// ---- 1 ---------------------------------------------------------------------------------

Outcome trust_region() {
  dff::Rng rng(101);
  const double grid[] = {0.1, 0.5, 0.9};
  std::size_t draws = 0, coords = 0, violations = 0;
  double worst = 0.0;
  for (; draws < 10000; ++draws) {
    const std::size_t p = 1 + rng.index(6), d = 1 + rng.index(8);
    const double eps = grid[rng.index(3)];
    const auto net = random_net(rng, p, d, eps, draws);
    std::vector<double> x(p);
    for (auto& v : x) v = 3.0 * rng.normal();
    const auto c_hat = random_c_hat(rng, d);
    const auto c_tilde = net.forward(x, c_hat);
    for (std::size_t i = 0; i < d; ++i, ++coords) {
      const double gap = std::abs(c_tilde[i] - c_hat[i]);
      if (!(gap <= eps * std::abs(c_hat[i]))) ++violations;
      if (c_hat[i] != 0.0) worst = std::max(worst, gap / (eps * std::abs(c_hat[i])));
    }
  }
  return {violations == 0, std::to_string(draws) + " draws, " + std::to_string(coords) +
                               " coordinates, violations " + std::to_string(violations) +
                               ", max |c~-c^|/(eps|c^|) " + fmt("%.9f", worst)};
}

// ---- 2 ---------------------------------------------------------------------------------

Outcome bounds() {
  dff::Rng rng(202);
  constexpr double kTol = 1e-12;
  std::size_t draws = 0, rmse_bad = 0, cos_bad = 0;
  double rmse_slack = INFINITY, cos_slack = INFINITY;
  for (; draws < 10000; ++draws) {
    const std::size_t p = 1 + rng.index(6), d = 1 + rng.index(8);
    const double eps = draws % 10 == 0 ? 1.0 : rng.uniform(0.0, 1.0);
    const auto net = random_net(rng, p, d, eps, 5000 + draws);
    std::vector<double> x(p);
    for (auto& v : x) v = 3.0 * rng.normal();
    const auto c_hat = random_c_hat(rng, d);
    std::vector<double> c(d);
    for (std::size_t i = 0; i < d; ++i) c[i] = c_hat[i] + vnorm(c_hat) * rng.normal();
    const auto c_tilde = net.forward(x, c_hat);
    const double inc = rmse(c_tilde, c) - rmse(c_hat, c);
    const double bound = eps / std::sqrt(static_cast<double>(d)) * vnorm(c_hat);
    const double scale = std::max(1.0, vnorm(c_hat));
    if (inc > bound + kTol * scale) ++rmse_bad;
    rmse_slack = std::min(rmse_slack, (bound - inc) / scale);
    const double cosine = vdot(c_tilde, c_hat) / (vnorm(c_tilde) * vnorm(c_hat));
    const double floor = std::sqrt(1.0 - eps * eps);
    if (cosine < floor - kTol) ++cos_bad;
    cos_slack = std::min(cos_slack, cosine - floor);
  }
  return {rmse_bad == 0 && cos_bad == 0,
          std::to_string(draws) + " draws, rmse violations " + std::to_string(rmse_bad) +
              ", cosine violations " + std::to_string(cos_bad) + ", min scaled rmse slack " +
              fmt("%.3e", rmse_slack) + ", min cosine slack " + fmt("%.3e", cos_slack) +
              ", tol 1e-12"};
}

// ---- 3 ---------------------------------------------------------------------------------

struct SmallProblem {
  std::unique_ptr<dff::DecisionOracle> oracle;
  std::function<double(const std::vector<double>&)> best;  // reference optimum, own sense
};

SmallProblem random_small_problem(dff::Rng& rng) {
  SmallProblem sp;
  if (rng.bernoulli(0.5)) {
    const int n = rng.bernoulli(0.5) ? 2 : 3;
    sp.oracle = std::make_unique<dff::GridShortestPathOracle>(dff::GridGraph(n, n));
    sp.best = [n](const std::vector<double>& c) { return ref::enumerate_paths(n, n, c).best; };
  } else {
    dff::AllocationInstance inst;
    inst.caps = uniform_vec(rng, 1 + rng.index(6), 0.1, 2.0);
    double total = 0.0;
    for (double cap : inst.caps) total += cap;
    inst.budget = rng.uniform(0.1, 1.2) * total;
    sp.best = [caps = inst.caps, budget = inst.budget](const std::vector<double>& c) {
      return ref::allocation_vertex_best(caps, budget, c);
    };
    sp.oracle = std::make_unique<dff::AllocationOracle>(inst);
  }
  return sp;
}

Outcome spo_plus_properties() {
  dff::Rng rng(303);
  constexpr double kTol = 1e-9;
  std::size_t upper = 0, zero = 0, convex = 0, reference = 0, optimal = 0;
  double max_ref_gap = 0.0;
  const std::size_t n = 1000;
  for (std::size_t t = 0; t < n; ++t) {
    const auto sp = random_small_problem(rng);
    const auto& o = *sp.oracle;
    const std::size_t d = o.dim();
    const double s = o.sense() == dff::ProblemSense::kMinimize ? 1.0 : -1.0;
    const auto c = uniform_vec(rng, d, 0.0, 2.0);
    const auto ct = uniform_vec(rng, d, -1.0, 3.0);
    const auto ct2 = uniform_vec(rng, d, -1.0, 3.0);
    const auto r1 = dff::spo_plus(o, ct, c);
    const auto r2 = dff::spo_plus(o, ct2, c);
    const auto rc = dff::spo_plus(o, c, c);

    // Loss from its definition with reference optima:
    // -s opt(2c~ - c) + s (2c~ - c)^T w*(c), with w*(c) certified optimal.
    const auto wstar = o.solve(c).w;
    if (std::abs(vdot(c, wstar) - sp.best(c)) > 1e-12) ++optimal;
    std::vector<double> k(d);
    for (std::size_t i = 0; i < d; ++i) k[i] = 2.0 * ct[i] - c[i];
    const double want = -s * sp.best(k) + s * vdot(k, wstar);
    const double gap = std::abs(want - r1.loss) / std::max(1.0, std::abs(want));
    max_ref_gap = std::max(max_ref_gap, gap);
    if (gap > 1e-12) ++reference;

    const double regret = s * (vdot(c, o.solve(ct).w) - sp.best(c));
    if (r1.loss < regret - kTol) ++upper;
    if (rc.loss > kTol) ++zero;
    double lin = r1.loss;
    for (std::size_t i = 0; i < d; ++i) lin += r1.gradient[i] * (ct2[i] - ct[i]);
    if (r2.loss < lin - kTol) ++convex;
  }
  const bool ok = upper + zero + convex + reference + optimal == 0;
  return {ok, std::to_string(n) + " instances, failures: upper bound " + std::to_string(upper) +
                  ", loss(c,c) " + std::to_string(zero) + ", convexity " + std::to_string(convex) +
                  ", definition " + std::to_string(reference) + " (max rel gap " +
                  fmt("%.2e", max_ref_gap) + "), tol 1e-9"};
}

// ---- 4 ---------------------------------------------------------------------------------

Outcome oracle_exactness() {
  dff::Rng rng(404);
  std::size_t grid_cases = 0, grid_bad = 0, alloc_cases = 0, alloc_bad = 0;
  for (int r = 1; r <= 4; ++r) {
    for (int c = 1; c <= 4; ++c) {
      if (r * c == 1) continue;
      dff::GridShortestPathOracle o{dff::GridGraph(r, c)};
      for (int t = 0; t < 100; ++t, ++grid_cases) {
        // Integer costs keep every sum exact and produce ties.
        std::vector<double> cost(o.dim());
        for (auto& v : cost) v = static_cast<double>(rng.index(5));
        const auto sol = o.solve(cost);
        if (sol.objective != ref::enumerate_paths(r, c, cost).best ||
            vdot(cost, sol.w) != sol.objective) {
          ++grid_bad;
        }
      }
    }
  }
  for (std::size_t kk = 1; kk <= 6; ++kk) {
    for (int t = 0; t < 200; ++t, ++alloc_cases) {
      // Dyadic values keep the greedy and the enumeration in exact arithmetic.
      dff::AllocationInstance inst;
      for (std::size_t i = 0; i < kk; ++i) inst.caps.push_back(static_cast<double>(1 + rng.index(16)) / 8.0);
      inst.budget = static_cast<double>(1 + rng.index(8 * 16)) / 8.0;
      std::vector<double> cost(kk);
      for (auto& v : cost) v = static_cast<double>(rng.index(33)) / 16.0 - 1.0;
      const dff::AllocationOracle o(inst);
      const auto sol = o.solve(cost);
      double used = 0.0;
      for (std::size_t i = 0; i < kk; ++i) used += sol.w[i];
      if (sol.objective != ref::allocation_vertex_best(inst.caps, inst.budget, cost) ||
          used > inst.budget) {
        ++alloc_bad;
      }
    }
  }
  double lattice_gap = 0.0;
  std::size_t port_cases = 0, port_bad = 0;
  for (std::size_t d = 2; d <= 3; ++d) {
    for (int t = 0; t < 40; ++t, ++port_cases) {
      const auto inst = dff::gen_portfolio_instance(d, 2, 7000 + 100 * d + t);
      const dff::PortfolioOracle o(inst);
      const auto cost = uniform_vec(rng, d, -0.05, 0.15);
      std::vector<double> s(d * d);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) s[i * d + j] = inst.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
      const double lattice = ref::portfolio_lattice_best(s, inst.gamma, cost, 1e-3);
      const double obj = o.solve(cost).objective;
      lattice_gap = std::max(lattice_gap, std::abs(obj - lattice));
      if (std::abs(obj - lattice) > 1e-3) ++port_bad;
    }
  }
  double kkt_worst = 0.0;
  std::size_t kkt_cases = 0;
  for (int t = 0; t < 50; ++t, ++kkt_cases) {
    const dff::PortfolioOracle o(dff::gen_portfolio_instance(10, 4, 9000 + t));
    const auto cost = uniform_vec(rng, 10, -0.05, 0.15);
    const auto sol = o.solve(cost);
    kkt_worst = std::max(kkt_worst, o.kkt_residuals(cost, sol.w, sol.diagnostics.at("lambda")).max());
  }
  const bool ok = grid_bad == 0 && alloc_bad == 0 && port_bad == 0 && kkt_worst <= 1e-6;
  return {ok, "grid " + std::to_string(grid_cases - grid_bad) + "/" + std::to_string(grid_cases) +
                  " exact, allocation " + std::to_string(alloc_cases - alloc_bad) + "/" +
                  std::to_string(alloc_cases) + " exact, portfolio d<=3 max |obj-lattice| " +
                  fmt("%.2e", lattice_gap) + " (tol 1e-3), d=10 max KKT residual " +
                  fmt("%.2e", kkt_worst) + " (tol 1e-6)"};
}

// ---- 5 ---------------------------------------------------------------------------------

Outcome gradients() {
  dff::Rng rng(505);
  double worst = 0.0;
  std::size_t bad = 0;
  const int nets = 100;
  for (int t = 0; t < nets; ++t) {
    const std::size_t p = 1 + rng.index(4), d = 1 + rng.index(4);
    dff::CorrectionConfig cfg;
    cfg.p = p;
    cfg.d = d;
    cfg.epsilon = rng.uniform(0.05, 0.95);
    cfg.hidden.assign(1 + rng.index(2), 2 + rng.index(5));
    dff::CorrectionNet net(cfg, 600 + t);
    std::vector<double> theta(net.num_params());
    for (auto& v : theta) v = 0.7 * rng.normal();
    net.set_params(theta);
    const auto x = uniform_vec(rng, p, -1.0, 1.0);
    const auto c_hat = uniform_vec(rng, d, -3.0, 3.0);
    const auto v = uniform_vec(rng, d, -1.0, 1.0);
    dff::ForwardTrace trace;
    net.forward(x, c_hat, &trace);
    const auto grad = net.backward(trace, v);
    auto f = [&](const std::vector<double>& th) {
      dff::CorrectionNet copy = net;
      copy.set_params(th);
      return vdot(copy.forward(x, c_hat), v);
    };
    const auto fd = ref::central_gradient(f, theta, 1e-6);
    double diff = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) diff += (grad[i] - fd[i]) * (grad[i] - fd[i]);
    const double rel = std::sqrt(diff) / std::max({1e-12, vnorm(grad), vnorm(fd)});
    worst = std::max(worst, rel);
    if (rel > 1e-4) ++bad;
  }
  return {bad == 0, std::to_string(nets) + " nets, max relative error " + fmt("%.2e", worst) +
                        " (tol 1e-4), failures " + std::to_string(bad)};
}

// ---- shared helpers for the pipeline criteria ------------------------------------------

double independent_ndr(const dff::DecisionOracle& o, const std::vector<dff::CostVector>& truth,
                       const std::function<std::vector<double>(std::size_t)>& decision) {
  const double s = o.sense() == dff::ProblemSense::kMinimize ? 1.0 : -1.0;
  double regret = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double opt = o.solve(truth[i]).objective;
    regret += s * (vdot(truth[i], decision(i)) - opt);
    scale += std::abs(opt);
  }
  return regret / scale;
}

double independent_ndr(const dff::DecisionOracle& o, const std::vector<dff::CostVector>& truth,
                       const std::vector<dff::CostVector>& preds) {
  return independent_ndr(o, truth, [&](std::size_t i) { return o.solve(preds[i]).w; });
}

double independent_mse(const std::vector<dff::CostVector>& preds,
                       const std::vector<dff::CostVector>& truth) {
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += rmse(preds[i], truth[i]) * rmse(preds[i], truth[i]);
  return s / static_cast<double>(preds.size());
}

double independent_ceiling(const std::vector<dff::CostVector>& backbone,
                           const std::vector<dff::CostVector>& truth, double eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    const double r = rmse(backbone[i], truth[i]);
    const double b = eps * vnorm(backbone[i]) / std::sqrt(static_cast<double>(backbone[i].size()));
    s += (r + b) * (r + b) - r * r;
  }
  return s / static_cast<double>(backbone.size());
}

bool close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

// ---- 6 ---------------------------------------------------------------------------------

Outcome identity() {
  std::size_t cases = 0, eps0_bad = 0, epoch0_bad = 0;
  for (auto bench : {dff::Benchmark::kGridFlow, dff::Benchmark::kAllocation}) {
    dff::ExperimentConfig cfg;
    cfg.benchmark = bench;
    cfg.epsilon = 0.0;
    cfg.seeds = {0, 1, 2, 3, 4};
    for (auto seed : cfg.seeds) {
      ++cases;
      const auto data = dff::generate_benchmark(cfg, seed);
      dff::MethodFitter zero(cfg, data, seed);
      const auto& base = zero.fit(cfg.dff_backbone);
      const auto& tuned = zero.fit("dff");
      const auto be = dff::evaluate_method(base, data.test, *data.oracle);
      const auto te = dff::evaluate_method(tuned, data.test, *data.oracle);
      if (be.ndr != te.ndr || be.mse != te.mse || be.predictions != te.predictions) ++eps0_bad;

      dff::ExperimentConfig live = cfg;
      live.epsilon = 0.5;
      dff::MethodFitter fitter(live, data, seed);
      const auto& b = fitter.fit(live.dff_backbone);
      const auto& d = fitter.fit("dff");
      const auto val_preds = dff::predict_all(*b.predictor, fitter.val());
      const auto truth = fitter.val().cost_vectors();
      const double backbone_ndr = dff::summarize_regret(*data.oracle, truth, val_preds).normalized();
      if (!d.report || d.report->val_ndr.empty() || d.report->val_ndr.front() != backbone_ndr ||
          !close(backbone_ndr, independent_ndr(*data.oracle, truth, val_preds), 1e-12)) {
        ++epoch0_bad;
      }
    }
  }
  return {eps0_bad == 0 && epoch0_bad == 0,
          std::to_string(cases) + " seeds over grid_flow and allocation: eps=0 mismatches " +
              std::to_string(eps0_bad) + ", epoch-0 validation NDR mismatches " +
              std::to_string(epoch0_bad) + " (bitwise)"};
}

// ---- 7 ---------------------------------------------------------------------------------

struct SeedEval {
  double ndr_backbone = 0.0, ndr_dff = 0.0;
  double mse_backbone = 0.0, mse_dff = 0.0, ceiling = 0.0;
};

Outcome table1() {
  TempDir tmp;
  bool ok = true;
  std::ostringstream detail;
  std::size_t consistency = 0;
  for (auto bench : {dff::Benchmark::kGridFlow, dff::Benchmark::kAllocation}) {
    for (int variant : {1, 2}) {
      dff::ExperimentConfig cfg;
      cfg.benchmark = bench;
      cfg.variant = variant;
      cfg.methods = {"boost_2fold", "dff"};
      cfg.out_dir = (tmp / (dff::benchmark_name(bench) + std::to_string(variant))).string();
      const auto report = dff::run_experiment(cfg);
      double ndr_b = 0, ndr_d = 0, gap = 0, ceil = 0;
      for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
        const auto seed = cfg.seeds[k];
        const auto data = dff::generate_benchmark(cfg, seed);
        dff::MethodFitter fitter(cfg, data, seed);
        const auto be = dff::evaluate_method(fitter.fit("boost_2fold"), data.test, *data.oracle);
        const auto de =
            dff::evaluate_method(fitter.fit("dff"), data.test, *data.oracle, &be.predictions);
        const auto truth = data.test.cost_vectors();
        const double nb = independent_ndr(*data.oracle, truth, be.predictions);
        const double nd = independent_ndr(*data.oracle, truth, de.predictions);
        const double mb = independent_mse(be.predictions, truth);
        const double md = independent_mse(de.predictions, truth);
        const auto& cb = report.cells[k];
        const auto& cd = report.cells[cfg.seeds.size() + k];
        if (!cb.ok || !cd.ok || !close(cb.ndr, nb) || !close(cd.ndr, nd) || !close(cb.mse, mb) ||
            !close(cd.mse, md)) {
          ++consistency;
        }
        ndr_b += nb;
        ndr_d += nd;
        gap += md - mb;
        ceil += independent_ceiling(be.predictions, truth, cfg.epsilon);
      }
      const double n = static_cast<double>(cfg.seeds.size());
      ndr_b /= n;
      ndr_d /= n;
      gap /= n;
      ceil /= n;
      const bool here = ndr_d <= ndr_b && gap <= ceil;
      ok = ok && here;
      detail << dff::benchmark_name(bench) << " v" << variant << ": NDR dff " << fmt("%.6f", ndr_d)
             << " vs boost_2fold " << fmt("%.6f", ndr_b) << ", MSE gap " << fmt("%.4g", gap)
             << " <= ceiling " << fmt("%.4g", ceil) << (here ? "" : " [fails]") << "; ";
    }
  }
  ok = ok && consistency == 0;
  detail << "report mismatches " << consistency;
  return {ok, detail.str()};
}

// ---- 8 ---------------------------------------------------------------------------------

Outcome table2() {
  TempDir tmp;
  dff::ExperimentConfig cfg;
  cfg.benchmark = dff::Benchmark::kAllocationSim;
  cfg.methods = {"avg_alloc", "sim_backbone", "dff_over_sim", "nn_spo"};
  cfg.out_dir = (tmp / "sim").string();
  const auto report = dff::run_experiment(cfg);
  std::map<std::string, double> ndr;
  std::map<std::string, std::vector<double>> pooled;
  std::vector<double> truth_pool;
  std::size_t consistency = 0;
  const std::size_t n = cfg.seeds.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto seed = cfg.seeds[k];
    const auto data = dff::generate_benchmark(cfg, seed);
    dff::MethodFitter fitter(cfg, data, seed);
    const auto truth = data.test.cost_vectors();
    for (const auto& c : truth) truth_pool.insert(truth_pool.end(), c.begin(), c.end());
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      const auto& name = cfg.methods[m];
      const auto& fitted = fitter.fit(name);
      double v;
      if (fitted.decision) {
        v = independent_ndr(*data.oracle, truth, [&](std::size_t) { return *fitted.decision; });
      } else {
        const auto preds = dff::predict_all(*fitted.predictor, data.test);
        v = independent_ndr(*data.oracle, truth, preds);
        for (const auto& c : preds) pooled[name].insert(pooled[name].end(), c.begin(), c.end());
      }
      ndr[name] += v / static_cast<double>(n);
      const auto& cell = report.cells[m * n + k];
      if (!cell.ok || !close(cell.ndr, v)) ++consistency;
    }
  }
  const double w_dff = ref::wasserstein_equal_size(pooled["dff_over_sim"], truth_pool);
  const double w_nn = ref::wasserstein_equal_size(pooled["nn_spo"], truth_pool);
  if (!close(report.wasserstein.at("dff_over_sim"), w_dff) || !close(report.wasserstein.at("nn_spo"), w_nn)) {
    ++consistency;
  }
  const bool order = ndr["avg_alloc"] > ndr["sim_backbone"] && ndr["sim_backbone"] > ndr["dff_over_sim"];
  const bool ok = order && w_dff < w_nn && consistency == 0;
  return {ok, "NDR avg_alloc " + fmt("%.6f", ndr["avg_alloc"]) + " > sim_backbone " +
                  fmt("%.6f", ndr["sim_backbone"]) + " > dff_over_sim " +
                  fmt("%.6f", ndr["dff_over_sim"]) + " (nn_spo " + fmt("%.6f", ndr["nn_spo"]) +
                  "); Wasserstein dff_over_sim " + fmt("%.6f", w_dff) + " < nn_spo " +
                  fmt("%.6f", w_nn) + "; report mismatches " + std::to_string(consistency)};
}

// ---- 9 ---------------------------------------------------------------------------------

Outcome sweep() {
  TempDir tmp;
  bool ok = true;
  std::ostringstream detail;
  for (auto bench : {dff::Benchmark::kGridFlow, dff::Benchmark::kAllocation}) {
    dff::ExperimentConfig cfg;
    cfg.benchmark = bench;
    cfg.eps_grid = {0.0, 0.1, 0.2, 0.3, 0.5};
    cfg.out_dir = (tmp / dff::benchmark_name(bench)).string();
    const auto result = dff::epsilon_sweep(cfg);
    std::size_t zero_bad = 0, ceiling_bad = 0, mismatch = 0, rows = 0;
    double min_slack = INFINITY;
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
      const auto seed = cfg.seeds[k];
      const auto data = dff::generate_benchmark(cfg, seed);
      dff::MethodFitter fitter(cfg, data, seed);
      const auto be = dff::evaluate_method(fitter.fit(cfg.dff_backbone), data.test, *data.oracle);
      const auto truth = data.test.cost_vectors();
      for (std::size_t e = 0; e < cfg.eps_grid.size(); ++e, ++rows) {
        const double eps = cfg.eps_grid[e];
        const auto& row = result.rows[e * cfg.seeds.size() + k];
        fitter.set_epsilon(eps);
        const auto de = dff::evaluate_method(fitter.fit("dff"), data.test, *data.oracle, &be.predictions);
        if (!row.ok || row.seed != seed || row.epsilon != eps || row.ndr != de.ndr || row.mse != de.mse) {
          ++mismatch;
        }
        if (eps == 0.0 && (row.ndr != row.backbone_ndr || row.mse != row.backbone_mse ||
                           de.predictions != be.predictions)) {
          ++zero_bad;
        }
        const double gap = independent_mse(de.predictions, truth) - independent_mse(be.predictions, truth);
        const double ceiling = independent_ceiling(be.predictions, truth, eps);
        min_slack = std::min(min_slack, ceiling - gap);
        if (gap > ceiling + 1e-12 * std::max(1.0, row.backbone_mse)) ++ceiling_bad;
      }
    }
    ok = ok && zero_bad == 0 && ceiling_bad == 0 && mismatch == 0;
    detail << dff::benchmark_name(bench) << ": " << rows << " rows, eps=0 mismatches " << zero_bad
           << ", ceiling violations " << ceiling_bad << " (min slack " << fmt("%.3e", min_slack)
           << "), sweep mismatches " << mismatch << "; ";
  }
  std::string text = detail.str();
  text.resize(text.size() - 2);
  return {ok, text};
}

// ---- 10 --------------------------------------------------------------------------------

std::map<std::string, std::string> read_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[e.path().filename().string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

Outcome determinism() {
  TempDir tmp;
  std::size_t compared = 0, differing = 0;
  std::vector<std::string> runs;
  auto check = [&](const std::string& name, dff::ExperimentConfig cfg, bool is_sweep) {
    std::vector<std::map<std::string, std::string>> trees;
    for (std::size_t workers : {1, 1, 4}) {
      cfg.workers = workers;
      cfg.out_dir = (tmp / (name + "_" + std::to_string(trees.size()))).string();
      if (is_sweep) dff::epsilon_sweep(cfg);
      else dff::run_experiment(cfg);
      trees.push_back(read_tree(cfg.out_dir));
    }
    for (std::size_t r = 1; r < trees.size(); ++r) {
      if (trees[r].size() != trees[0].size()) ++differing;
      for (const auto& [file, bytes] : trees[0]) {
        ++compared;
        const auto it = trees[r].find(file);
        if (it == trees[r].end() || it->second != bytes) ++differing;
      }
    }
    runs.push_back(name);
  };
  dff::ExperimentConfig grid;
  grid.methods = {"ols", "boost_2fold", "nn_mse", "dff"};
  check("bench_grid", grid, false);
  dff::ExperimentConfig sim;
  sim.benchmark = dff::Benchmark::kAllocationSim;
  sim.methods = {"avg_alloc", "sim_backbone", "dff_over_sim", "nn_spo"};
  check("bench_allocation_sim", sim, false);
  dff::ExperimentConfig sw;
  sw.benchmark = dff::Benchmark::kAllocation;
  check("sweep_allocation", sw, true);
  std::string names;
  for (const auto& r : runs) names += (names.empty() ? "" : ", ") + r;
  return {differing == 0, names + " each run 3 times (workers 1, 1, 4): " +
                              std::to_string(compared) + " file comparisons, " +
                              std::to_string(differing) + " differ"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "trust region soundness", 10, trust_region},
    {2, "RMSE increment and cosine bounds", 10, bounds},
    {3, "SPO+ properties", 60, spo_plus_properties},
    {4, "oracle exactness", 120, oracle_exactness},
    {5, "correction-net gradients", 30, gradients},
    {6, "identity reductions", 600, identity},
    {7, "DFF improves the 2-fold boosting backbone", 1800, table1},
    {8, "allocation with a simulation backbone", 900, table2},
    {9, "epsilon sweep", 1800, sweep},
    {10, "determinism", 1800, determinism},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& c : kCriteria) {
    if (only && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("criterion %2d %s: %s (%.2fs, budget %.0fs%s) %s\n", c.id, pass ? "PASS" : "FAIL",
                c.name, secs, c.budget_seconds, in_time ? "" : ", over budget", out.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
