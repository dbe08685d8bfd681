#pragma once

// Transductive evaluation protocol: fold splitting, per-fold training, and the
// encoder-pair and hidden-dimension sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "dsgc/config.hpp"
#include "dsgc/errors.hpp"
#include "dsgc/graph.hpp"
#include "dsgc/loss.hpp"
#include "dsgc/optim.hpp"

namespace dsgc {

struct FoldSplit {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;  // every non-labeled graph, test graphs included
  std::vector<std::size_t> test;
};

/// Splits graph ids [0, n) into cfg.folds evaluation folds.
///
/// Partition mode: one seeded shuffle; fold k tests on slice
/// [floor(k n / F), floor((k + 1) n / F)). Independent mode: every fold draws a
/// fresh round(test_fraction * n) test set. Labeled ids are a seeded subset of
/// the non-test ids of size min(round(label_ratio * n), |non-test|).
inline std::vector<FoldSplit> split_folds(std::size_t n, const ExperimentConfig& cfg) {
  if (n < static_cast<std::size_t>(std::max(cfg.folds, 10)))
    throw ContractError("split_folds: dataset of " + std::to_string(n) + " graphs is too small");
  const auto folds = static_cast<std::size_t>(cfg.folds);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x5350ULL));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto wanted_labeled = static_cast<std::size_t>(std::llround(cfg.label_ratio * static_cast<double>(n)));
  std::vector<FoldSplit> out(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    FoldSplit& s = out[k];
    std::vector<char> is_test(n, 0);
    if (cfg.split_mode == SplitMode::partition) {
      const std::size_t b = k * n / folds, e = (k + 1) * n / folds;
      s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));
    } else {
      std::vector<std::size_t> draw = order;
      std::mt19937_64 rng(splitmix64(cfg.seed ^ (0x7E57ULL + k)));
      std::shuffle(draw.begin(), draw.end(), rng);
      const auto t = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(n))));
      s.test.assign(draw.begin(), draw.begin() + static_cast<std::ptrdiff_t>(t));
    }
    for (std::size_t id : s.test) is_test[id] = 1;

    std::vector<std::size_t> pool;
    for (std::size_t id : order)
      if (!is_test[id]) pool.push_back(id);
    std::mt19937_64 rng(splitmix64(cfg.seed ^ (0x1AB3ULL + k)));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(wanted_labeled, pool.size());
    if (take == 0) throw ContractError("split_folds: label ratio yields zero labeled graphs");
    s.labeled.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(s.labeled.begin(), s.labeled.end());
    std::sort(s.test.begin(), s.test.end());
    std::vector<char> is_labeled(n, 0);
    for (std::size_t id : s.labeled) is_labeled[id] = 1;
    for (std::size_t id = 0; id < n; ++id)
      if (!is_labeled[id]) s.unlabeled.push_back(id);
  }
  return out;
}

struct EpochTrace {
  int epoch = 0;
  double total = 0.0;
  double supervised = 0.0;
  double contrastive = 0.0;
  double train_accuracy = 0.0;
};

struct FoldResult {
  double accuracy = 0.0;
  std::vector<EpochTrace> trace;
};

struct MetricsRecord {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::vector<EpochTrace>> traces;
};

/// Mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

inline MetricsRecord aggregate(std::vector<FoldResult> folds) {
  MetricsRecord r;
  for (auto& f : folds) {
    r.fold_accuracy.push_back(f.accuracy);
    r.traces.push_back(std::move(f.trace));
  }
  std::tie(r.mean, r.std) = mean_std(r.fold_accuracy);
  return r;
}

/// Loads a TU dataset, keeps connected graphs and attaches degree one-hot features.
inline Dataset prepare_dataset(const std::filesystem::path& dir, int feature_cap) {
  return synthesize_features(filter_connected(parse_tu_dataset(dir)), static_cast<std::size_t>(feature_cap));
}

inline std::filesystem::path resolve_data_dir(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* root = std::getenv("DSGC_DATA_DIR")) return std::filesystem::path(root) / cfg.dataset;
  return std::filesystem::path("data") / cfg.dataset;
}

inline ModelConfig model_config(const ExperimentConfig& cfg, const Dataset& ds) {
  if (ds.graphs.empty()) throw ContractError("model_config: empty dataset");
  ModelConfig m;
  m.euclidean = cfg.euclidean_encoder;
  m.hyperbolic = cfg.hyperbolic_encoder;
  m.layers = static_cast<std::size_t>(cfg.number_of_encoder_layers);
  m.hidden = static_cast<std::size_t>(cfg.hidden_dimension);
  m.input_width = ds.graphs.front().feature_width();
  m.classes = static_cast<std::size_t>(ds.num_classes);
  m.curvature = cfg.curvature;
  m.hyperbolic_layers = cfg.hyperbolic_layers;
  return m;
}

/// Per-graph sampling seed for an epoch: sub-graphs are redrawn every epoch.
inline std::uint64_t view_seed(std::uint64_t base_seed, int epoch, std::size_t graph_id) {
  return splitmix64((base_seed + static_cast<std::uint64_t>(epoch)) ^ splitmix64(graph_id + 0x9E37ULL));
}

/// Optional hook observing every supervised step (labeled graph id); used to
/// audit that no test graph ever contributes a supervised gradient.
using SupervisedProbe = std::function<void(std::size_t labeled_id)>;

/// Trains a fresh model on one fold and reports its test accuracy.
inline FoldResult run_fold(const Dataset& ds, const FoldSplit& split, const ExperimentConfig& cfg, int fold,
                           const SupervisedProbe& probe = {}) {
  validate(cfg);
  if (split.unlabeled.empty()) throw ContractError("run_fold: no unlabeled graphs");
  std::unordered_set<std::size_t> test_ids(split.test.begin(), split.test.end());
  for (std::size_t id : split.labeled)
    if (test_ids.count(id)) throw ContractError("run_fold: labeled graph " + std::to_string(id) + " is in the test set");

  DsgcModel model(model_config(cfg, ds), splitmix64(cfg.seed * 0x100000001B3ULL + static_cast<std::uint64_t>(fold)));
  ad::Adam opt(model.parameters(), {cfg.learning_rate, cfg.weight_decay, 0.9, 0.999, 1e-8});
  const LossConfig loss_cfg{cfg.temperature, cfg.lambda_u, cfg.weight_of_contrastive_learning};
  const ViewConfig views{cfg.alpha_h, cfg.alpha_e};
  const std::size_t n_unlabeled = static_cast<std::size_t>(cfg.batch_size - 1);

  std::mt19937_64 order_rng(splitmix64(cfg.seed ^ (0x07DE7ULL + static_cast<std::uint64_t>(fold))));
  std::vector<std::size_t> unlabeled = split.unlabeled;
  std::shuffle(unlabeled.begin(), unlabeled.end(), order_rng);
  std::size_t cursor = 0;

  FoldResult result;
  std::vector<std::size_t> labeled = split.labeled;
  for (int epoch = 0; epoch < cfg.number_of_training_epoch; ++epoch) {
    std::shuffle(labeled.begin(), labeled.end(), order_rng);
    EpochTrace tr;
    tr.epoch = epoch;
    std::size_t correct = 0;
    for (std::size_t lid : labeled) {
      if (test_ids.count(lid)) throw ContractError("run_fold: supervised step on test graph");
      if (probe) probe(lid);
      Batch batch;
      batch.labeled = {&ds.graphs[lid], view_seed(cfg.seed, epoch, lid)};
      batch.label = ds.graphs[lid].label().value();
      for (std::size_t k = 0; k < n_unlabeled; ++k) {
        const std::size_t uid = unlabeled[cursor];
        cursor = (cursor + 1) % unlabeled.size();
        batch.unlabeled.push_back({&ds.graphs[uid], view_seed(cfg.seed, epoch, uid)});
      }
      const StepMetrics m = train_step(model, batch, loss_cfg, views, opt);
      if (!m.finite) throw TrainingDiverged(fold, epoch);
      tr.total += m.total;
      tr.supervised += m.supervised;
      tr.contrastive += m.contrastive;
      correct += m.correct ? 1 : 0;
    }
    const double nb = static_cast<double>(labeled.size());
    tr.total /= nb;
    tr.supervised /= nb;
    tr.contrastive /= nb;
    tr.train_accuracy = static_cast<double>(correct) / nb;
    result.trace.push_back(tr);
  }

  std::size_t hits = 0;
  for (std::size_t id : split.test) {
    const auto p = model.predict_proba(ds.graphs[id]);
    if (static_cast<int>(argmax(p)) == ds.graphs[id].label().value()) ++hits;
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(split.test.size());
  return result;
}

/// Runs every fold (up to `parallel_folds` concurrently) and aggregates.
inline MetricsRecord run_experiment(const Dataset& ds, const ExperimentConfig& cfg, int parallel_folds = 1) {
  validate(cfg);
  const auto splits = split_folds(ds.size(), cfg);
  std::vector<FoldResult> results(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < splits.size(); k = next++) {
      try {
        results[k] = run_fold(ds, splits[k], cfg, static_cast<int>(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp(parallel_folds, 1, static_cast<int>(splits.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return aggregate(std::move(results));
}

struct GridCell {
  EncoderKind euclidean;
  EncoderKind hyperbolic;
  MetricsRecord metrics;
};

/// run_experiment for every (euclidean kind, hyperbolic kind) pair, row-major in `kinds`.
inline std::vector<GridCell> encoder_pair_grid(const Dataset& ds, const ExperimentConfig& base,
                                               std::span<const EncoderKind> kinds, int parallel_folds = 1) {
  std::vector<GridCell> out;
  for (EncoderKind e : kinds)
    for (EncoderKind h : kinds) {
      ExperimentConfig c = base;
      c.euclidean_encoder = e;
      c.hyperbolic_encoder = h;
      out.push_back({e, h, run_experiment(ds, c, parallel_folds)});
    }
  return out;
}

inline constexpr int kSweepDimensions[] = {8, 16, 32, 64};

struct SweepPoint {
  int hidden_dimension;
  MetricsRecord metrics;
};

inline std::vector<SweepPoint> hidden_dim_sweep(const Dataset& ds, const ExperimentConfig& base,
                                                std::span<const int> dims, int parallel_folds = 1) {
  std::vector<SweepPoint> out;
  for (int d : dims) {
    ExperimentConfig c = base;
    c.hidden_dimension = d;
    out.push_back({d, run_experiment(ds, c, parallel_folds)});
  }
  return out;
}

}  // namespace dsgc
