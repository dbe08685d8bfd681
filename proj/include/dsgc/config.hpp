#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dsgc/encoders.hpp"
#include "dsgc/errors.hpp"

namespace dsgc {

enum class SplitMode { partition, independent };

/// Full run configuration. Key names follow the hyper-parameter table rows in snake_case.
struct ExperimentConfig {
  std::string dataset = "MUTAG";
  std::string data_dir;  // empty: resolved from DSGC_DATA_DIR/<dataset>
  EncoderKind euclidean_encoder = EncoderKind::gcn;
  EncoderKind hyperbolic_encoder = EncoderKind::gin;
  int number_of_encoder_layers = 3;
  double temperature = 1.0;
  double learning_rate = 5e-5;
  double weight_decay = 1e-5;
  int number_of_training_epoch = 200;
  double weight_of_contrastive_learning = 0.01;
  int batch_size = 8;
  int hidden_dimension = 16;
  double label_ratio = 0.5;
  int folds = 10;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
  double alpha_h = 0.8;
  double alpha_e = 0.8;
  double curvature = 1.0;
  double lambda_u = 1.0;
  int feature_cap = 64;
  SplitMode split_mode = SplitMode::partition;
  HyperbolicLayers hyperbolic_layers = HyperbolicLayers::euclidean;
};

inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key, why); };
  if (c.number_of_encoder_layers < 1) fail("number_of_encoder_layers", "must be >= 1");
  if (!(c.temperature > 0.0)) fail("temperature", "must be positive");
  if (!(c.learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (!(c.weight_decay >= 0.0)) fail("weight_decay", "must be nonnegative");
  if (c.number_of_training_epoch < 0) fail("number_of_training_epoch", "must be nonnegative");
  if (!(c.weight_of_contrastive_learning >= 0.0)) fail("weight_of_contrastive_learning", "must be nonnegative");
  if (c.batch_size < 2) fail("batch_size", "must be >= 2 (one labeled plus at least one unlabeled graph)");
  if (c.hidden_dimension < 1) fail("hidden_dimension", "must be >= 1");
  if (!(c.label_ratio > 0.0 && c.label_ratio < 1.0)) fail("label_ratio", "must lie in (0, 1)");
  if (c.folds < 1) fail("folds", "must be >= 1");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) fail("test_fraction", "must lie in (0, 1)");
  if (!(c.alpha_h > 0.0 && c.alpha_h <= 1.0)) fail("alpha_h", "must lie in (0, 1]");
  if (!(c.alpha_e > 0.0 && c.alpha_e <= 1.0)) fail("alpha_e", "must lie in (0, 1]");
  if (!(c.curvature > 0.0)) fail("curvature", "must be positive");
  if (!(c.lambda_u >= 0.0)) fail("lambda_u", "must be nonnegative");
  if (c.feature_cap < 1) fail("feature_cap", "must be >= 1");
}

inline std::string to_string(SplitMode m) { return m == SplitMode::partition ? "partition" : "independent"; }
inline std::string to_string(HyperbolicLayers h) { return h == HyperbolicLayers::euclidean ? "euclidean" : "mobius"; }

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"dataset", c.dataset},
      {"data_dir", c.data_dir},
      {"euclidean_encoder", to_string(c.euclidean_encoder)},
      {"hyperbolic_encoder", to_string(c.hyperbolic_encoder)},
      {"number_of_encoder_layers", c.number_of_encoder_layers},
      {"temperature", c.temperature},
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"number_of_training_epoch", c.number_of_training_epoch},
      {"weight_of_contrastive_learning", c.weight_of_contrastive_learning},
      {"batch_size", c.batch_size},
      {"hidden_dimension", c.hidden_dimension},
      {"label_ratio", c.label_ratio},
      {"folds", c.folds},
      {"test_fraction", c.test_fraction},
      {"seed", c.seed},
      {"alpha_h", c.alpha_h},
      {"alpha_e", c.alpha_e},
      {"curvature", c.curvature},
      {"lambda_u", c.lambda_u},
      {"feature_cap", c.feature_cap},
      {"split_mode", to_string(c.split_mode)},
      {"hyperbolic_layers", to_string(c.hyperbolic_layers)},
  };
}

/// Overlays the keys present in `j` onto `base`. Unknown keys and ill-typed
/// values raise ConfigError naming the key.
inline ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base = {}) {
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "dataset") base.dataset = value.get<std::string>();
      else if (key == "data_dir") base.data_dir = value.get<std::string>();
      else if (key == "euclidean_encoder") base.euclidean_encoder = parse_encoder_kind(value.get<std::string>());
      else if (key == "hyperbolic_encoder") base.hyperbolic_encoder = parse_encoder_kind(value.get<std::string>());
      else if (key == "number_of_encoder_layers") base.number_of_encoder_layers = value.get<int>();
      else if (key == "temperature") base.temperature = value.get<double>();
      else if (key == "learning_rate") base.learning_rate = value.get<double>();
      else if (key == "weight_decay") base.weight_decay = value.get<double>();
      else if (key == "number_of_training_epoch") base.number_of_training_epoch = value.get<int>();
      else if (key == "weight_of_contrastive_learning") base.weight_of_contrastive_learning = value.get<double>();
      else if (key == "batch_size") base.batch_size = value.get<int>();
      else if (key == "hidden_dimension") base.hidden_dimension = value.get<int>();
      else if (key == "label_ratio") base.label_ratio = value.get<double>();
      else if (key == "folds") base.folds = value.get<int>();
      else if (key == "test_fraction") base.test_fraction = value.get<double>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "alpha_h") base.alpha_h = value.get<double>();
      else if (key == "alpha_e") base.alpha_e = value.get<double>();
      else if (key == "curvature") base.curvature = value.get<double>();
      else if (key == "lambda_u") base.lambda_u = value.get<double>();
      else if (key == "feature_cap") base.feature_cap = value.get<int>();
      else if (key == "split_mode") {
        const auto s = value.get<std::string>();
        if (s == "partition") base.split_mode = SplitMode::partition;
        else if (s == "independent") base.split_mode = SplitMode::independent;
        else throw ConfigError(key, "expected 'partition' or 'independent'");
      } else if (key == "hyperbolic_layers") {
        const auto s = value.get<std::string>();
        if (s == "euclidean") base.hyperbolic_layers = HyperbolicLayers::euclidean;
        else if (s == "mobius") base.hyperbolic_layers = HyperbolicLayers::mobius;
        else throw ConfigError(key, "expected 'euclidean' or 'mobius'");
      } else {
        throw ConfigError(key, "unknown key");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    } catch (const ContractError& e) {
      throw ConfigError(key, e.what());
    }
  }
  validate(base);
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& p, ExperimentConfig base = {}) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open config file " + p.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", p.string() + ": " + e.what());
  }
  // A run manifest nests the resolved configuration under "config".
  if (j.is_object() && j.contains("config") && j.contains("command") && j["config"].is_object())
    return from_json(j["config"], base);
  return from_json(j, base);
}

/// Published settings for (dataset, label ratio). The MUTAG 0.5 hyperbolic
/// encoder is listed as "GCIN", read here as GIN.
inline ExperimentConfig table3_preset(const std::string& dataset, double label_ratio) {
  struct Row {
    EncoderKind e, h;
    int layers;
    double tau, lr, omega;
    int batch;
  };
  using K = EncoderKind;
  static const std::map<std::pair<std::string, int>, Row> rows = {
      {{"MUTAG", 1}, {K::graphsage, K::graphsage, 3, 1, 1e-4, 0.01, 8}},
      {{"MUTAG", 3}, {K::gcn, K::gcn, 3, 1, 1.7e-4, 0.01, 8}},
      {{"MUTAG", 5}, {K::gcn, K::gin, 3, 1, 5e-5, 0.01, 8}},
      {{"REDDIT-BINARY", 1}, {K::gcn, K::gat, 1, 100, 2e-5, 1e-5, 16}},
      {{"REDDIT-BINARY", 3}, {K::gcn, K::gin, 1, 100, 1e-4, 0.01, 16}},
      {{"REDDIT-BINARY", 5}, {K::gin, K::gin, 1, 100, 1e-5, 0.01, 16}},
      {{"COLLAB", 1}, {K::graphsage, K::gcn, 3, 100, 2e-5, 0.01, 32}},
      {{"COLLAB", 3}, {K::graphsage, K::graphsage, 3, 100, 2e-5, 1e-4, 64}},
      {{"COLLAB", 5}, {K::graphsage, K::gin, 1, 100, 2e-5, 0.01, 64}},
  };
  const int tenths = static_cast<int>(std::lround(label_ratio * 10.0));
  const auto it = rows.find({dataset, tenths});
  if (it == rows.end() || std::abs(label_ratio * 10.0 - tenths) > 1e-9)
    throw ConfigError("preset", "no published setting for " + dataset + " at label ratio " + std::to_string(label_ratio));
  const Row& r = it->second;
  ExperimentConfig c;
  c.dataset = dataset;
  c.euclidean_encoder = r.e;
  c.hyperbolic_encoder = r.h;
  c.number_of_encoder_layers = r.layers;
  c.temperature = r.tau;
  c.learning_rate = r.lr;
  c.weight_decay = 1e-5;
  c.number_of_training_epoch = 200;
  c.weight_of_contrastive_learning = r.omega;
  c.batch_size = r.batch;
  c.hidden_dimension = 16;
  c.label_ratio = label_ratio;
  return c;
}

}  // namespace dsgc
