// dsgc: stats | train | sample | sweep

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dsgc/dsgc.hpp"

namespace fs = std::filesystem;
using namespace dsgc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct RunOptions {
  std::string config_file;
  std::string preset;
  std::string data_dir;
  std::string out_root = "runs";
  std::string run_dir;
  int parallel_folds = 1;
  std::optional<double> omega, lr, ratio;
  std::optional<int> epochs, hidden_dim, folds;
  std::optional<std::uint64_t> seed;
};

void add_run_options(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--config", o.config_file, "JSON configuration file (a run manifest is accepted too)");
  cmd.add_option("--preset", o.preset, "published setting as DATASET:RATIO, e.g. MUTAG:0.5");
  cmd.add_option("--data-dir", o.data_dir, "TU dataset directory (default: $DSGC_DATA_DIR/<dataset>)");
  cmd.add_option("--out", o.out_root, "root directory for run outputs");
  cmd.add_option("--run-dir", o.run_dir, "exact output directory (overrides --out)");
  cmd.add_option("--parallel-folds", o.parallel_folds, "folds trained concurrently")->check(CLI::PositiveNumber);
  cmd.add_option("--omega", o.omega, "weight_of_contrastive_learning");
  cmd.add_option("--lr", o.lr, "learning_rate");
  cmd.add_option("--ratio", o.ratio, "label_ratio");
  cmd.add_option("--epochs", o.epochs, "number_of_training_epoch");
  cmd.add_option("--hidden-dim", o.hidden_dim, "hidden_dimension");
  cmd.add_option("--folds", o.folds, "number of evaluation folds");
  cmd.add_option("--seed", o.seed, "base seed");
}

ExperimentConfig resolve_config(const RunOptions& o) {
  ExperimentConfig cfg;
  if (!o.preset.empty()) {
    const auto colon = o.preset.find(':');
    if (colon == std::string::npos) throw ConfigError("preset", "expected DATASET:RATIO");
    double ratio = 0.0;
    try {
      ratio = std::stod(o.preset.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("preset", "ratio is not a number");
    }
    cfg = table3_preset(o.preset.substr(0, colon), ratio);
  }
  if (!o.config_file.empty()) cfg = load_config(o.config_file, cfg);
  if (o.omega) cfg.weight_of_contrastive_learning = *o.omega;
  if (o.lr) cfg.learning_rate = *o.lr;
  if (o.ratio) cfg.label_ratio = *o.ratio;
  if (o.epochs) cfg.number_of_training_epoch = *o.epochs;
  if (o.hidden_dim) cfg.hidden_dimension = *o.hidden_dim;
  if (o.folds) cfg.folds = *o.folds;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;
  validate(cfg);
  return cfg;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

struct RunContext {
  ExperimentConfig cfg;
  fs::path data_path;
  fs::path out_dir;
  Dataset dataset;
};

RunContext start_run(const RunOptions& o, const std::string& command, nlohmann::json extra = {}) {
  RunContext ctx;
  ctx.cfg = resolve_config(o);
  ctx.data_path = resolve_data_dir(ctx.cfg);
  ctx.dataset = prepare_dataset(ctx.data_path, ctx.cfg.feature_cap);
  const std::string stamp = utc_timestamp();
  ctx.out_dir = o.run_dir.empty() ? fs::path(o.out_root) / (stamp + "_seed" + std::to_string(ctx.cfg.seed))
                                  : fs::path(o.run_dir);
  nlohmann::json manifest = {
      {"command", command},
      {"timestamp", stamp},
      {"seed", ctx.cfg.seed},
      {"dataset_path", ctx.data_path.string()},
      {"output_dir", ctx.out_dir.string()},
      {"config", to_json(ctx.cfg)},
  };
  if (!extra.is_null()) manifest.update(extra);
  write_file_atomic(ctx.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return ctx;
}

void record_divergence(const fs::path& dir, const TrainingDiverged& e) {
  const nlohmann::json j = {{"error", "training_diverged"}, {"fold", e.fold()}, {"epoch", e.epoch()}};
  write_file_atomic(dir / "error.json", j.dump(2) + "\n");
}

int cmd_stats(const std::string& dir, bool no_filter) {
  Dataset ds = parse_tu_dataset(dir);
  if (!no_filter) ds = filter_connected(ds);
  const DatasetStats s = dataset_stats(ds);
  std::cout << std::left << std::setw(16) << "dataset" << std::setw(8) << "graphs" << std::setw(9) << "classes"
            << std::setw(11) << "avg_nodes" << "avg_edges\n";
  std::cout << std::setw(16) << ds.name << std::setw(8) << s.graphs << std::setw(9) << s.classes << std::fixed
            << std::setprecision(2) << std::setw(11) << s.mean_nodes << s.mean_edges << "\n";
  return kExitOk;
}

int cmd_train(const RunOptions& o) {
  RunContext ctx = start_run(o, "train");
  std::cout << "run directory: " << ctx.out_dir.string() << "\n";
  MetricsRecord m;
  try {
    m = run_experiment(ctx.dataset, ctx.cfg, o.parallel_folds);
  } catch (const TrainingDiverged& e) {
    record_divergence(ctx.out_dir, e);
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  }
  write_file_atomic(ctx.out_dir / "folds.csv", folds_csv(m));
  write_file_atomic(ctx.out_dir / "loss_trace.csv", loss_trace_csv(m));
  write_file_atomic(ctx.out_dir / "summary.json", summary_json(m).dump(2) + "\n");
  std::cout << std::fixed << std::setprecision(4) << "mean accuracy " << m.mean << " (std " << m.std << ") over "
            << m.fold_accuracy.size() << " folds\n";
  return kExitOk;
}

int cmd_sweep(const RunOptions& o, const std::string& kind) {
  if (kind != "dim" && kind != "encoders") {
    std::cerr << "error: unknown sweep kind '" << kind << "' (valid: dim, encoders)\n";
    return kExitUsage;
  }
  RunContext ctx = start_run(o, "sweep", {{"sweep", kind}});
  std::cout << "run directory: " << ctx.out_dir.string() << "\n";
  std::vector<std::pair<std::string, MetricsRecord>> rows;
  try {
    if (kind == "dim") {
      for (auto& p : hidden_dim_sweep(ctx.dataset, ctx.cfg, kSweepDimensions, o.parallel_folds))
        rows.emplace_back("d=" + std::to_string(p.hidden_dimension), std::move(p.metrics));
    } else {
      for (auto& c : encoder_pair_grid(ctx.dataset, ctx.cfg, kAllEncoderKinds, o.parallel_folds))
        rows.emplace_back(to_string(c.euclidean) + "/" + to_string(c.hyperbolic),
                          std::move(c.metrics));
    }
  } catch (const TrainingDiverged& e) {
    record_divergence(ctx.out_dir, e);
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  }
  write_file_atomic(ctx.out_dir / ("sweep_" + kind + ".csv"), sweep_csv(rows));
  for (const auto& [label, m] : rows)
    std::cout << std::left << std::setw(18) << label << std::fixed << std::setprecision(4) << m.mean << " (std "
              << m.std << ")\n";
  return kExitOk;
}

int cmd_sample(const std::string& dir, std::size_t index, const std::string& sampler, double rate,
               std::uint64_t seed, bool check, int seeds) {
  SamplerKind kind;
  try {
    kind = parse_sampler_kind(sampler);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  const Dataset ds = parse_tu_dataset(dir);
  if (index >= ds.size()) {
    std::cerr << "error: graph index " << index << " out of range (dataset has " << ds.size() << " graphs)\n";
    return kExitUsage;
  }
  const Graph& g = ds.graphs[index];
  const SampledGraph sg = sample(kind, g, {rate, seed});
  std::cout << "graph " << index << ": " << g.num_nodes() << " nodes, " << g.num_edges() << " edges; " << sampler
            << " rate " << rate << " seed " << seed << " -> " << sg.graph.num_nodes() << " nodes, "
            << sg.graph.num_edges() << " edges\n";
  std::cout << "nodes (sampled -> original):\n";
  for (std::size_t k = 0; k < sg.original_ids.size(); ++k) std::cout << "  " << k << " -> " << sg.original_ids[k] << "\n";
  std::cout << "edges:\n";
  for (const auto& [a, b] : sg.graph.edges()) std::cout << "  " << a << " " << b << "\n";
  if (!check) return kExitOk;

  int failures = 0;
  const std::size_t want = sample_target_size(g.num_nodes(), rate);
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t sd = seed + static_cast<std::uint64_t>(s);
    const SampledGraph a = sample(kind, g, {rate, sd});
    const SampledGraph b = sample(kind, g, {rate, sd});
    std::vector<std::string> bad;
    if (is_connected(g) && !is_connected(a.graph)) bad.push_back("disconnected");
    if (a.graph.num_nodes() != want) bad.push_back("size " + std::to_string(a.graph.num_nodes()));
    std::size_t induced = 0;
    for (std::size_t i = 0; i < a.original_ids.size(); ++i)
      for (std::size_t j = i + 1; j < a.original_ids.size(); ++j)
        if (g.has_edge(a.original_ids[i], a.original_ids[j])) ++induced;
    if (induced != a.graph.num_edges()) bad.push_back("induced edges incomplete");
    if (a.original_ids != b.original_ids || a.graph.edges() != b.graph.edges()) bad.push_back("nondeterministic");
    if (!bad.empty()) {
      ++failures;
      std::cout << "check seed " << sd << ":";
      for (const auto& w : bad) std::cout << " " << w;
      std::cout << "\n";
    }
  }
  std::cout << "check: " << (seeds - failures) << "/" << seeds << " seeds pass\n";
  return failures == 0 ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual space graph contrastive learning"};
  app.require_subcommand(1);

  std::string stats_dir;
  bool no_filter = false;
  auto* stats = app.add_subcommand("stats", "dataset statistics after connectivity filtering");
  stats->add_option("dir", stats_dir, "TU dataset directory")->required();
  stats->add_flag("--no-filter", no_filter, "report statistics before filtering");

  RunOptions train_opts;
  auto* train = app.add_subcommand("train", "run the evaluation protocol and write result files");
  add_run_options(*train, train_opts);

  RunOptions sweep_opts;
  std::string sweep_kind;
  auto* sweep = app.add_subcommand("sweep", "hidden-dimension sweep or encoder-pair grid");
  add_run_options(*sweep, sweep_opts);
  sweep->add_option("--kind", sweep_kind, "dim | encoders")->required();

  std::string sample_dir, sampler;
  std::size_t index = 0;
  double rate = 0.8;
  std::uint64_t seed = 0;
  bool check = false;
  int seeds = 100;
  auto* samp = app.add_subcommand("sample", "print one sampled sub-graph");
  samp->add_option("dir", sample_dir, "TU dataset directory")->required();
  samp->add_option("index", index, "graph index")->required();
  samp->add_option("sampler", sampler, "diffusion | community")->required();
  samp->add_option("rate", rate, "sampling rate in (0, 1]")->required();
  samp->add_option("seed", seed, "sampling seed")->required();
  samp->add_flag("--check", check, "verify sampler invariants over a range of seeds");
  samp->add_option("--seeds", seeds, "seeds checked by --check")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*stats) return cmd_stats(stats_dir, no_filter);
    if (*train) return cmd_train(train_opts);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_kind);
    if (*samp) return cmd_sample(sample_dir, index, sampler, rate, seed, check, seeds);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
