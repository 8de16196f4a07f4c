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
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dff/error.hpp"
#include "dff/experiment.hpp"
#include "dff/version.hpp"

namespace dff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : ""; }

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

nlohmann::ordered_json json_number(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json();
}

double number_or_nan(const nlohmann::ordered_json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<MethodAggregate> aggregate_cells(const std::vector<std::string>& methods,
                                             const std::vector<CellResult>& cells) {
  std::vector<MethodAggregate> out;
  for (const auto& m : methods) {
    MethodAggregate agg;
    agg.method = m;
    std::vector<double> ndr;
    std::vector<double> mse;
    for (const auto& c : cells) {
      if (c.method != m) continue;
      if (!c.ok) {
        ++agg.n_failed;
        continue;
      }
      ++agg.n_ok;
      ndr.push_back(c.ndr);
      if (std::isfinite(c.mse)) mse.push_back(c.mse);
      agg.violations += c.trust_violations + c.cosine_violations + c.rmse_violations;
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      if (v.empty()) {
        mean = kNaN;
        sd = kNaN;
        return;
      }
      mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      sd = 0.0;
      if (v.size() > 1) {
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
      }
    };
    stats(ndr, agg.ndr_mean, agg.ndr_std);
    stats(mse, agg.mse_mean, agg.mse_std);
    out.push_back(agg);
  }
  return out;
}

const MethodAggregate* ExperimentReport::aggregate(const std::string& method) const {
  for (const auto& a : aggregates) {
    if (a.method == method) return &a;
  }
  return nullptr;
}

nlohmann::ordered_json ExperimentReport::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "dff-report";
  j["version"] = 1;
  j["benchmark"] = benchmark;
  j["variant"] = variant;
  j["epsilon"] = epsilon;
  j["config"] = config;
  auto& cells_json = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json row;
    row["method"] = c.method;
    row["seed"] = c.seed;
    row["status"] = c.ok ? "ok" : "failed";
    row["ndr"] = c.ok ? json_number(c.ndr) : nlohmann::ordered_json();
    row["mse"] = c.ok ? json_number(c.mse) : nlohmann::ordered_json();
    row["mse_ceiling"] = c.ok ? json_number(c.mse_ceiling) : nlohmann::ordered_json();
    if (c.has_bounds) {
      row["trust_violations"] = c.trust_violations;
      row["cosine_violations"] = c.cosine_violations;
      row["rmse_violations"] = c.rmse_violations;
    } else {
      row["trust_violations"] = nullptr;
      row["cosine_violations"] = nullptr;
      row["rmse_violations"] = nullptr;
    }
    row["error"] = c.error;
    cells_json.push_back(std::move(row));
  }
  auto& agg_json = j["aggregates"] = nlohmann::ordered_json::array();
  for (const auto& a : aggregates) {
    nlohmann::ordered_json row;
    row["method"] = a.method;
    row["n_ok"] = a.n_ok;
    row["n_failed"] = a.n_failed;
    row["ndr_mean"] = json_number(a.ndr_mean);
    row["ndr_std"] = json_number(a.ndr_std);
    row["mse_mean"] = json_number(a.mse_mean);
    row["mse_std"] = json_number(a.mse_std);
    row["violations"] = a.violations;
    agg_json.push_back(std::move(row));
  }
  auto& w = j["wasserstein"] = nlohmann::ordered_json::object();
  for (const auto& [method, value] : wasserstein) w[method] = value;
  return j;
}

ExperimentReport ExperimentReport::from_json(const nlohmann::ordered_json& j) {
  ExperimentReport r;
  try {
    if (j.at("format") != "dff-report" || j.at("version") != 1) {
      throw DataError("not a report file");
    }
    r.benchmark = j.at("benchmark").get<std::string>();
    r.variant = j.at("variant").get<int>();
    r.epsilon = j.at("epsilon").get<double>();
    r.config = j.at("config");
    for (const auto& row : j.at("cells")) {
      CellResult c;
      c.method = row.at("method").get<std::string>();
      c.seed = row.at("seed").get<std::uint64_t>();
      c.ok = row.at("status").get<std::string>() == "ok";
      c.ndr = number_or_nan(row.at("ndr"));
      c.mse = number_or_nan(row.at("mse"));
      c.mse_ceiling = number_or_nan(row.at("mse_ceiling"));
      c.has_bounds = !row.at("trust_violations").is_null();
      if (c.has_bounds) {
        c.trust_violations = row.at("trust_violations").get<std::size_t>();
        c.cosine_violations = row.at("cosine_violations").get<std::size_t>();
        c.rmse_violations = row.at("rmse_violations").get<std::size_t>();
      }
      c.error = row.at("error").get<std::string>();
      if (!c.ok) {
        c.ndr = 0.0;
        c.mse = 0.0;
        c.mse_ceiling = 0.0;
      }
      r.cells.push_back(std::move(c));
    }
    for (const auto& row : j.at("aggregates")) {
      MethodAggregate a;
      a.method = row.at("method").get<std::string>();
      a.n_ok = row.at("n_ok").get<std::size_t>();
      a.n_failed = row.at("n_failed").get<std::size_t>();
      a.ndr_mean = number_or_nan(row.at("ndr_mean"));
      a.ndr_std = number_or_nan(row.at("ndr_std"));
      a.mse_mean = number_or_nan(row.at("mse_mean"));
      a.mse_std = number_or_nan(row.at("mse_std"));
      a.violations = row.at("violations").get<std::size_t>();
      r.aggregates.push_back(std::move(a));
    }
    for (const auto& [method, value] : j.at("wasserstein").items()) {
      r.wasserstein[method] = value.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "benchmark,variant,epsilon,method,seed,status,ndr,mse,mse_ceiling,trust_violations,"
         "cosine_violations,rmse_violations,error\n";
  for (const auto& c : cells) {
    out << benchmark << ',' << variant << ',' << format_double(epsilon) << ',' << c.method << ','
        << c.seed << ',' << (c.ok ? "ok" : "failed") << ',' << (c.ok ? csv_number(c.ndr) : "")
        << ',' << (c.ok ? csv_number(c.mse) : "") << ','
        << (c.ok ? csv_number(c.mse_ceiling) : "") << ',';
    if (c.has_bounds) {
      out << c.trust_violations << ',' << c.cosine_violations << ',' << c.rmse_violations;
    } else {
      out << ",,";
    }
    out << ',' << csv_text(c.error) << '\n';
  }
  return out.str();
}

std::string ExperimentReport::to_table() const {
  std::ostringstream out;
  std::size_t seeds = 0;
  for (const auto& a : aggregates) seeds = std::max(seeds, a.n_ok + a.n_failed);
  out << "benchmark " << benchmark << "  variant " << variant << "  epsilon "
      << format_double(epsilon) << "  seeds " << seeds << "\n\n";
  std::size_t width = 6;
  for (const auto& a : aggregates) width = std::max(width, a.method.size());
  auto cell = [](double v) {
    char buf[32];
    if (std::isfinite(v)) {
      std::snprintf(buf, sizeof buf, "%12.6f", v);
    } else {
      std::snprintf(buf, sizeof buf, "%12s", "-");
    }
    return std::string(buf);
  };
  char head[256];
  std::snprintf(head, sizeof head, "%-*s %12s %12s %12s %12s %9s\n", static_cast<int>(width),
                "method", "NDR mean", "NDR std", "MSE mean", "MSE std", "ok/fail");
  out << head;
  out << std::string(width + 1 + 4 * 13 + 10, '-') << '\n';
  for (const auto& a : aggregates) {
    char count[32];
    std::snprintf(count, sizeof count, "%zu/%zu", a.n_ok, a.n_failed);
    char name[128];
    std::snprintf(name, sizeof name, "%-*s", static_cast<int>(width), a.method.c_str());
    out << name << ' ' << cell(a.ndr_mean) << ' ' << cell(a.ndr_std) << ' ' << cell(a.mse_mean)
        << ' ' << cell(a.mse_std) << ' ';
    char tail[48];
    std::snprintf(tail, sizeof tail, "%9s", count);
    out << tail << '\n';
  }
  if (!wasserstein.empty()) {
    out << "\nWasserstein distance to the truth distribution\n";
    for (const auto& [method, w] : wasserstein) {
      char name[128];
      std::snprintf(name, sizeof name, "%-*s", static_cast<int>(width), method.c_str());
      out << name << ' ' << cell(w) << '\n';
    }
  }
  return out.str();
}

ExperimentReport load_report(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(file)) file /= "report.json";
  const std::string text = read_file(file);
  try {
    return ExperimentReport::from_json(nlohmann::ordered_json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed report " + file.string() + ": " + e.what());
  }
}

std::string SweepResult::to_csv() const {
  std::ostringstream out;
  out << "epsilon,seed,status,ndr,mse,backbone_ndr,backbone_mse,mse_ceiling,trust_violations,"
         "error\n";
  for (const auto& r : rows) {
    out << format_double(r.epsilon) << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      out << format_double(r.ndr) << ',' << format_double(r.mse) << ','
          << format_double(r.backbone_ndr) << ',' << format_double(r.backbone_mse) << ','
          << format_double(r.mse_ceiling) << ',' << r.trust_violations;
    } else {
      out << ",,,,,";
    }
    out << ',' << csv_text(r.error) << '\n';
  }
  return out.str();
}

std::string SweepResult::summary_csv() const {
  std::ostringstream out;
  out << "epsilon,n,ndr_mean,mse_mean,backbone_ndr_mean,backbone_mse_mean\n";
  for (const auto& s : summary) {
    out << format_double(s.epsilon) << ',' << s.n << ',' << format_double(s.ndr_mean) << ','
        << format_double(s.mse_mean) << ',' << format_double(s.backbone_ndr_mean) << ','
        << format_double(s.backbone_mse_mean) << '\n';
  }
  return out.str();
}

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& config) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json j;
  j["tool"] = "dff";
  j["version"] = kVersion;
  j["command"] = command;
  j["config_hash"] = config.hash();
  j["seeds"] = config.seeds;
  j["config"] = config.to_json();
  auto& inv = j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    const std::string bytes = read_file(f);
    nlohmann::ordered_json e;
    e["name"] = f.filename().string();
    e["bytes"] = bytes.size();
    e["fnv1a"] = fnv1a_hex(bytes);
    inv.push_back(std::move(e));
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

}  // namespace dff
