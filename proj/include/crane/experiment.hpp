#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "crane/config.hpp"
#include "crane/dataset.hpp"
#include "crane/io.hpp"
#include "crane/metrics.hpp"
#include "crane/training.hpp"

namespace crane {

enum class Command { Train, Eval, Ablate, Bench };

std::string_view to_string(Command c);
Command parse_command(std::string_view s);

struct RunOptions {
  std::filesystem::path config_path;
  std::filesystem::path data_dir = ".";
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;  // overrides both the training and the split seed
  bool synthetic = false;             // use the planted-block generator instead of files
  std::size_t threads = 1;
};

/// Loads the config and applies the command-line overrides.
TrainConfig resolve_config(const RunOptions& opt);

/// Synthetic data (seeded by the split seed) when requested or when the
/// config's dataset is "synthetic"; otherwise the three files in data_dir.
DatasetBundle load_dataset(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                           bool synthetic);

Parallelism parallelism_for(const TrainConfig& cfg, std::size_t threads);

/// Recall and NDCG at K = 10 and 20 on the validation and test splits.
std::vector<MetricRow> evaluate_model(const TrainedModel& model, const DatasetBundle& data,
                                      const Parallelism& par = {});

struct AblationRow {
  Variant variant = Variant::Full;
  Aggregation aggregation = Aggregation::Sum;
  Index best_epoch = 0;
  MetricRow valid;  // K = 20
  MetricRow test;   // K = 20
};

/// The configurations of the selected ablation grid, in order.
std::vector<TrainConfig> ablation_grid(const TrainConfig& cfg);

/// Trains and evaluates every grid entry on the same data and seed.
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const DatasetBundle& data,
                                      const Parallelism& par = {}, std::ostream* log = nullptr);

std::string ablation_json(const MetricContext& ctx, const std::vector<AblationRow>& rows);

/// Planted-block data with exactly n_items items for the scaling benchmark.
DatasetBundle bench_bundle(const TrainConfig& cfg, Index n_items);

struct BenchRow {
  Index n_items = 0;
  Index n_users = 0;
  Index n_interactions = 0;
  double epoch_seconds_min = 0.0;
  double epoch_seconds_median = 0.0;
  double rca_seconds = 0.0;  // stage minima over the repeats
  double sparse_seconds = 0.0;
  double similarity_seconds = 0.0;
  double sparse_f32_seconds = 0.0;  // float-CSR propagation, f32 storage only
  double peak_rss_mb = 0.0;
};

/// Measures one item count in the current process (peak RSS left at 0).
BenchRow bench_point(const TrainConfig& cfg, Index n_items, const Parallelism& par = {});

/// Every configured item count, each in a forked child so peak RSS is
/// per point.
std::vector<BenchRow> run_bench(const TrainConfig& cfg, const Parallelism& par = {},
                                std::ostream* log = nullptr);

std::string bench_json(const TrainConfig& cfg, const std::vector<BenchRow>& rows);

/// Runs a command end to end, writing its outputs to opt.out_dir. Returns
/// the process exit status; failures are reported on `err`.
int run_experiment(Command command, const RunOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace crane
