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

#include "dff/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dff/error.hpp"
#include "json.hpp"

namespace dff {

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return static_cast<std::size_t>(draw % bound);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : stream) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset::Dataset(std::vector<Sample> samples, std::size_t p, std::size_t d,
                 std::string provenance, std::uint64_t seed)
    : samples_(std::move(samples)), p_(p), d_(d), provenance_(std::move(provenance)),
      seed_(seed) {
  if (p_ == 0 || d_ == 0) throw DataError("dataset dimensions p and d must be positive");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.x.size() != p_ || s.c.size() != d_) {
      throw DataError("sample " + std::to_string(i) + " has shape (" +
                      std::to_string(s.x.size()) + ", " + std::to_string(s.c.size()) +
                      "), expected (" + std::to_string(p_) + ", " + std::to_string(d_) + ")");
    }
    if (!all_finite(s.x) || !all_finite(s.c)) {
      throw DataError("sample " + std::to_string(i) + " contains a non-finite value");
    }
  }
}

Dataset Dataset::from_matrices(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c,
                               std::string provenance, std::uint64_t seed) {
  if (x.rows() != c.rows()) throw DataError("feature and cost row counts differ");
  std::vector<Sample> samples(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto& s = samples[static_cast<std::size_t>(i)];
    s.x.assign(x.cols(), 0.0);
    s.c.assign(c.cols(), 0.0);
    for (Eigen::Index j = 0; j < x.cols(); ++j) s.x[j] = x(i, j);
    for (Eigen::Index j = 0; j < c.cols(); ++j) s.c[j] = c(i, j);
  }
  return Dataset(std::move(samples), static_cast<std::size_t>(x.cols()),
                 static_cast<std::size_t>(c.cols()), std::move(provenance), seed);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples_.size()) throw DataError("subset index out of range");
    out.push_back(samples_[i]);
  }
  return Dataset(std::move(out), p_, d_, provenance_, seed_);
}

Eigen::MatrixXd Dataset::features() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(p_));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < p_; ++j) m(i, j) = samples_[i].x[j];
  return m;
}

Eigen::MatrixXd Dataset::costs() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(d_));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < d_; ++j) m(i, j) = samples_[i].c[j];
  return m;
}

std::vector<CostVector> Dataset::cost_vectors() const {
  std::vector<CostVector> out;
  out.reserve(size());
  for (const auto& s : samples_) out.push_back(s.c);
  return out;
}

DatasetSplit split_dataset(const Dataset& dataset, const SplitSpec& spec) {
  const double fracs[] = {spec.train_frac, spec.val_frac, spec.test_frac};
  for (double f : fracs) {
    if (!(f >= 0.0) || f > 1.0) throw UsageError("split fractions must lie in [0, 1]");
  }
  if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-12) {
    throw UsageError("split fractions must sum to 1");
  }
  const std::size_t n = dataset.size();
  if (n < 3) throw DataError("split_dataset needs at least 3 samples");

  // The small slack absorbs products such as 10 * 0.7 = 6.9999999999999991.
  auto part = [n](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
  };
  const std::size_t n_val = part(spec.val_frac);
  const std::size_t n_test = part(spec.test_frac);
  if (spec.val_frac > 0 && n_val == 0) throw DataError("validation fraction yields an empty set");
  if (spec.test_frac > 0 && n_test == 0) throw DataError("test fraction yields an empty set");
  if (n_val + n_test > n) throw DataError("split sizes exceed dataset size");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(spec.seed, "split"));
  rng.shuffle(std::span<std::size_t>(perm));

  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(perm.begin() + begin, perm.begin() + end);
    std::sort(idx.begin(), idx.end());
    return dataset.subset(idx);
  };
  DatasetSplit out;
  out.val = take(0, n_val);
  out.test = take(n_val, n_val + n_test);
  out.train = take(n_val + n_test, n);
  return out;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed) {
  if (k < 2) throw UsageError("k-fold partition needs k >= 2");
  if (k > n) {
    throw DataError("cannot split " + std::to_string(n) + " samples into " +
                    std::to_string(k) + " folds");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(perm[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error(ErrorKind::kInternal, "double formatting failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
  std::filesystem::path meta = csv_path;
  meta.replace_extension(".meta.json");
  return meta;
}

void write_dataset_csv(const std::filesystem::path& csv_path, const Dataset& dataset) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + csv_path.string());
  for (std::size_t j = 0; j < dataset.p(); ++j) out << (j ? "," : "") << "x_" << j;
  for (std::size_t j = 0; j < dataset.d(); ++j) out << ",c_" << j;
  out << '\n';
  for (const auto& s : dataset.samples()) {
    for (std::size_t j = 0; j < s.x.size(); ++j) out << (j ? "," : "") << format_double(s.x[j]);
    for (double v : s.c) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + csv_path.string());

  nlohmann::ordered_json meta;
  meta["p"] = dataset.p();
  meta["d"] = dataset.d();
  meta["n"] = dataset.size();
  // Generator provenance is itself compact JSON; embed it as an object.
  const auto& prov = dataset.provenance();
  if (!prov.empty() && prov.front() == '{') {
    meta["provenance"] = nlohmann::ordered_json::parse(prov);
  } else {
    meta["provenance"] = prov;
  }
  meta["seed"] = dataset.seed();
  std::ofstream mout(meta_path_for(csv_path), std::ios::binary);
  if (!mout) throw IoError("cannot write " + meta_path_for(csv_path).string());
  mout << meta.dump(2) << '\n';
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset read_dataset_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  std::size_t p = 0, d = 0;
  for (auto col : header) {
    if (col == "x_" + std::to_string(p) && d == 0) {
      ++p;
    } else if (col == "c_" + std::to_string(d)) {
      ++d;
    } else {
      throw DataError(csv_path.string() + ": unexpected column '" + std::string(col) + "'");
    }
  }

  std::uint64_t seed = 0;
  std::string provenance = "external";
  const auto meta_path = meta_path_for(csv_path);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream min(meta_path);
    try {
      auto meta = nlohmann::ordered_json::parse(min);
      if (meta.value("p", p) != p || meta.value("d", d) != d) {
        throw DataError(meta_path.string() + ": p/d disagree with the CSV header");
      }
      seed = meta.value("seed", std::uint64_t{0});
      if (meta.contains("provenance")) {
        const auto& prov = meta["provenance"];
        provenance = prov.is_string() ? prov.get<std::string>() : prov.dump();
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(meta_path.string() + ": " + e.what());
    }
  }

  std::vector<Sample> samples;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != p + d) {
      throw DataError(csv_path.string() + ":" + std::to_string(row) + ": expected " +
                      std::to_string(p + d) + " fields");
    }
    Sample s;
    s.x.reserve(p);
    s.c.reserve(d);
    try {
      for (std::size_t j = 0; j < p; ++j) s.x.push_back(parse_double(cells[j]));
      for (std::size_t j = 0; j < d; ++j) s.c.push_back(parse_double(cells[p + j]));
    } catch (const DataError& e) {
      throw DataError(csv_path.string() + ":" + std::to_string(row) + ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw DataError(csv_path.string() + ": no samples");
  return Dataset(std::move(samples), p, d, provenance, seed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace dff
