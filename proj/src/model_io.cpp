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

#include <fstream>

#include "dff/error.hpp"
#include "dff/experiment.hpp"

namespace dff {

namespace {

namespace fs = std::filesystem;

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json save_predictor(const Predictor& model, const fs::path& dir,
                                      const std::string& prefix, const BenchmarkData& data) {
  nlohmann::ordered_json desc;
  if (const auto* lin = dynamic_cast<const LinearModel*>(&model)) {
    desc["type"] = "linear";
    desc["file"] = prefix + "linear.json";
    write_json(dir / (prefix + "linear.json"), lin->to_json());
  } else if (const auto* ens = dynamic_cast<const TreeEnsemble*>(&model)) {
    desc["type"] = "trees";
    desc["file"] = prefix + "trees.txt";
    std::ofstream out(dir / (prefix + "trees.txt"), std::ios::binary);
    if (!out) throw IoError("cannot write tree dump in " + dir.string());
    ens->write(out);
  } else if (const auto* cf = dynamic_cast<const CrossFitBackbone*>(&model)) {
    desc["type"] = "crossfit";
    desc["assignment"] = cf->fold_assignment();
    auto& folds = desc["folds"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < cf->folds(); ++k) {
      folds.push_back(
          save_predictor(*cf->fold_model(k), dir, prefix + "fold" + std::to_string(k) + "_", data));
    }
  } else if (const auto* nn = dynamic_cast<const NnPredictor*>(&model)) {
    desc["type"] = "nn";
    desc["file"] = prefix + "nn.txt";
    nn->save(dir / (prefix + "nn.txt"));
  } else if (const auto* tuned = dynamic_cast<const DffPredictor*>(&model)) {
    desc["type"] = "dff";
    desc["file"] = prefix + "correction.txt";
    desc["backbone"] = save_predictor(*tuned->backbone(), dir, prefix + "backbone_", data);
    tuned->net().save(dir / (prefix + "correction.txt"));
  } else if (dynamic_cast<const OpaqueBackbone*>(&model) && data.simulation) {
    desc["type"] = "simulation";
    desc["file"] = prefix + "simulation.json";
    write_json(dir / (prefix + "simulation.json"), data.simulation->to_json());
  } else {
    throw UsageError("cannot save a '" + model.describe() + "' model");
  }
  return desc;
}

std::shared_ptr<const Predictor> load_predictor(const nlohmann::json& desc, const fs::path& dir) {
  const std::string type = desc.at("type").get<std::string>();
  auto file = [&] { return dir / desc.at("file").get<std::string>(); };
  if (type == "linear") return std::make_shared<LinearModel>(LinearModel::from_json(read_json(file())));
  if (type == "trees") {
    std::ifstream in(file(), std::ios::binary);
    if (!in) throw IoError("cannot read " + file().string());
    return std::make_shared<TreeEnsemble>(TreeEnsemble::read(in));
  }
  if (type == "crossfit") {
    std::vector<std::shared_ptr<const Predictor>> folds;
    for (const auto& f : desc.at("folds")) folds.push_back(load_predictor(f, dir));
    return std::make_shared<CrossFitBackbone>(
        std::move(folds), desc.at("assignment").get<std::vector<std::size_t>>());
  }
  if (type == "nn") return std::make_shared<NnPredictor>(NnPredictor::load(file()));
  if (type == "dff") {
    auto backbone = load_predictor(desc.at("backbone"), dir);
    return std::make_shared<DffPredictor>(std::move(backbone), CorrectionNet::load(file()));
  }
  if (type == "simulation") {
    return simulation_backbone(SimulationScenario::from_json(read_json(file())));
  }
  throw DataError("unknown model component type '" + type + "'");
}

}  // namespace

void save_model(const fs::path& dir, const FittedMethod& fitted, const BenchmarkData& data) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["format"] = "dff-model";
  j["version"] = 1;
  j["method"] = fitted.name;
  j["benchmark"] = benchmark_name(data.benchmark);
  if (fitted.decision) {
    j["decision"] = *fitted.decision;
  } else {
    if (!fitted.predictor) throw Error(ErrorKind::kInternal, "method has no predictor to save");
    j["predictor"] = save_predictor(*fitted.predictor, dir, "", data);
  }
  if (fitted.report) write_json(dir / "train_report.json", fitted.report->to_json(false));
  write_json(dir / "model.json", j);
}

LoadedModel load_model(const fs::path& dir) {
  const auto j = read_json(dir / "model.json");
  LoadedModel out;
  try {
    if (j.at("format") != "dff-model" || j.at("version") != 1) {
      throw DataError("not a model directory: " + dir.string());
    }
    out.method = j.at("method").get<std::string>();
    if (j.contains("decision")) {
      out.decision = j.at("decision").get<std::vector<double>>();
      return out;
    }
    out.predictor = load_predictor(j.at("predictor"), dir);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model description in " + dir.string() + ": " + e.what());
  }
  if (const auto* tuned = dynamic_cast<const DffPredictor*>(out.predictor.get())) {
    out.backbone = tuned->backbone();
    out.epsilon = tuned->net().epsilon();
  }
  return out;
}

}  // namespace dff
