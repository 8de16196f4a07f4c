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

#include "dff/backbone.hpp"

#include <cmath>
#include <sstream>

#include "dff/error.hpp"

namespace dff {

CostVector predict(const Predictor& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw DataError(model.describe() + ": expected " + std::to_string(model.input_dim()) +
                    " features, got " + std::to_string(x.size()));
  }
  CostVector out;
  try {
    out = model.predict(x);
  } catch (const Error& e) {
    throw Error(e.kind(), model.describe() + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(model.describe() + ": prediction failed: " + e.what());
  }
  if (out.size() != model.output_dim()) {
    throw DataError(model.describe() + ": produced " + std::to_string(out.size()) +
                    " outputs, expected " + std::to_string(model.output_dim()));
  }
  if (!all_finite(out)) throw DataError(model.describe() + ": produced a non-finite prediction");
  return out;
}

std::vector<CostVector> predict_all(const Predictor& model, const Dataset& data) {
  std::vector<CostVector> out;
  out.reserve(data.size());
  for (const auto& s : data.samples()) out.push_back(predict(model, s.x));
  return out;
}

// ---------------------------------------------------------------------------

LinearModel::LinearModel(Eigen::MatrixXd beta, bool intercept)
    : beta_(std::move(beta)), intercept_(intercept) {
  if (!beta_.allFinite()) throw DataError("linear model coefficients must be finite");
  if (intercept_ && beta_.rows() < 1) throw DataError("intercept model needs at least one row");
}

std::size_t LinearModel::input_dim() const {
  return static_cast<std::size_t>(beta_.rows()) - (intercept_ ? 1 : 0);
}

CostVector LinearModel::predict(std::span<const double> x) const {
  const std::size_t p = input_dim();
  CostVector out(static_cast<std::size_t>(beta_.cols()), 0.0);
  for (Eigen::Index j = 0; j < beta_.cols(); ++j) {
    double s = intercept_ ? beta_(static_cast<Eigen::Index>(p), j) : 0.0;
    for (std::size_t i = 0; i < p; ++i) s += beta_(static_cast<Eigen::Index>(i), j) * x[i];
    out[j] = s;
  }
  return out;
}

nlohmann::ordered_json LinearModel::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "linear";
  j["rows"] = beta_.rows();
  j["cols"] = beta_.cols();
  j["intercept"] = intercept_;
  std::vector<double> flat(beta_.data(), beta_.data() + beta_.size());  // column-major
  j["beta_colmajor"] = flat;
  j["ridge_applied"] = ridge_applied;
  return j;
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "linear") throw DataError("not a linear model");
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("beta_colmajor").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
      throw DataError("linear model coefficient count mismatch");
    }
    Eigen::MatrixXd beta = Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows, cols);
    LinearModel m(std::move(beta), j.at("intercept").get<bool>());
    m.ridge_applied = j.value("ridge_applied", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed linear model: ") + e.what());
  }
}

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

}  // namespace

LinearModel fit_ols(const Eigen::MatrixXd& x_in, const Eigen::MatrixXd& y, bool intercept) {
  if (x_in.rows() != y.rows()) throw DataError("OLS: X and Y row counts differ");
  if (x_in.rows() == 0) throw DataError("OLS: no samples");
  const Eigen::MatrixXd x = intercept ? with_intercept(x_in) : x_in;
  Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double p = static_cast<double>(x.cols());

  bool ridge = false;
  double shift = 0.0;
  if (lo <= 1e-10 * hi) {
    shift = 1e-8 * gram.trace() / p;
    gram.diagonal().array() += shift;
    ridge = true;
  }
  const double smallest = std::max(lo, 0.0) + shift;
  const double condition = smallest > 0.0 ? hi / smallest : std::numeric_limits<double>::infinity();
  if (!(smallest >= 1e-10)) {
    std::ostringstream msg;
    msg << "OLS: X^T X is singular even after ridge fallback (condition estimate " << condition
        << ")";
    throw DataError(msg.str());
  }
  Eigen::MatrixXd beta = gram.ldlt().solve(x.transpose() * y);
  LinearModel model(std::move(beta), intercept);
  model.ridge_applied = ridge;
  model.condition_estimate = condition;
  return model;
}

LinearModel fit_gls(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    std::span<const Eigen::MatrixXd> q) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const Eigen::Index d = y.cols();
  if (y.rows() != n) throw DataError("GLS: X and Y row counts differ");
  if (static_cast<Eigen::Index>(q.size()) != n) throw DataError("GLS: need one Q per sample");

  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d * p, d * p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d * p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd& qi = q[static_cast<std::size_t>(i)];
    if (qi.rows() != d || qi.cols() != d) throw DataError("GLS: Q_i must be d x d");
    const Eigen::MatrixXd qs = 0.5 * (qi + qi.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(qs, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
      throw DataError("GLS: Q_" + std::to_string(i) + " is not positive semi-definite");
    }
    const Eigen::VectorXd xi = x.row(i).transpose();
    const Eigen::MatrixXd outer = xi * xi.transpose();
    const Eigen::VectorXd qy = qs * y.row(i).transpose();
    for (Eigen::Index a = 0; a < d; ++a) {
      rhs.segment(a * p, p) += qy(a) * xi;
      for (Eigen::Index b = 0; b < d; ++b) {
        lhs.block(a * p, b * p, p, p) += qs(a, b) * outer;
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lhs, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * hi) {
    throw DataError("GLS: normal equations are singular");
  }
  const Eigen::VectorXd theta = lhs.ldlt().solve(rhs);
  Eigen::MatrixXd beta(p, d);
  for (Eigen::Index j = 0; j < d; ++j) beta.col(j) = theta.segment(j * p, p);
  return LinearModel(std::move(beta), false);
}

// ---------------------------------------------------------------------------

OpaqueBackbone::OpaqueBackbone(Function fn, std::size_t inputs, std::size_t outputs,
                               std::string description)
    : fn_(std::move(fn)), inputs_(inputs), outputs_(outputs), description_(std::move(description)) {
  if (!fn_) throw UsageError("opaque backbone needs a prediction function");
}

CostVector OpaqueBackbone::predict(std::span<const double> x) const { return fn_(x); }

CrossFitBackbone::CrossFitBackbone(std::vector<std::shared_ptr<const Predictor>> fold_models,
                                   std::vector<std::size_t> fold_of_sample)
    : folds_(std::move(fold_models)), fold_of_sample_(std::move(fold_of_sample)) {
  if (folds_.size() < 2) throw UsageError("cross-fitting needs at least two fold models");
  for (const auto& m : folds_) {
    if (!m) throw UsageError("null fold model");
    if (m->input_dim() != folds_.front()->input_dim() ||
        m->output_dim() != folds_.front()->output_dim()) {
      throw DataError("fold models disagree on dimensions");
    }
  }
  for (std::size_t f : fold_of_sample_) {
    if (f >= folds_.size()) throw DataError("fold assignment out of range");
  }
}

CostVector CrossFitBackbone::predict(std::span<const double> x) const {
  if (mode_ == Mode::kFullData) return full_->predict(x);
  CostVector out(output_dim(), 0.0);
  for (const auto& m : folds_) {
    const CostVector part = m->predict(x);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += part[j];
  }
  const double k = static_cast<double>(folds_.size());
  for (double& v : out) v /= k;
  return out;
}

std::string CrossFitBackbone::describe() const {
  return std::to_string(folds_.size()) + "-fold " + folds_.front()->describe();
}

void CrossFitBackbone::set_full_model(std::shared_ptr<const Predictor> model) {
  if (!model || model->input_dim() != input_dim() || model->output_dim() != output_dim()) {
    throw DataError("full-data model does not match the fold models");
  }
  full_ = std::move(model);
}

void CrossFitBackbone::set_mode(Mode mode) {
  if (mode == Mode::kFullData && !full_) throw UsageError("no full-data model attached");
  mode_ = mode;
}

CrossFitResult crossfit_predict_train(const Dataset& data, std::size_t k, const FitFunction& fit,
                                      std::uint64_t seed) {
  if (k < 2) throw UsageError("cross-fitting needs k >= 2");
  const auto folds = kfold_partition(data.size(), k, seed);
  std::vector<std::size_t> fold_of(data.size());
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i : folds[f]) fold_of[i] = f;
  }

  CrossFitResult result;
  result.out_of_fold.resize(data.size());
  std::vector<std::shared_ptr<const Predictor>> models;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> complement;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (fold_of[i] != f) complement.push_back(i);
    }
    if (complement.size() < 2) {
      throw DataError("fold " + std::to_string(f) + " leaves only " +
                      std::to_string(complement.size()) + " samples to fit on");
    }
    std::shared_ptr<const Predictor> model;
    try {
      model = fit(data.subset(complement));
    } catch (const Error& e) {
      throw Error(e.kind(), "cross-fit fold " + std::to_string(f) + ": " + e.what());
    }
    for (std::size_t i : folds[f]) result.out_of_fold[i] = dff::predict(*model, data[i].x);
    models.push_back(std::move(model));
  }
  result.backbone = std::make_shared<CrossFitBackbone>(std::move(models), std::move(fold_of));
  return result;
}

}  // namespace dff
