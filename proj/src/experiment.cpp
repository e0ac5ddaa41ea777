#include "crane/experiment.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crane/io.hpp"
#include "crane/plot.hpp"
#include "crane/rng.hpp"
#include "crane/sparse.hpp"
#include "crane/stage_clock.hpp"

namespace crane {

namespace {

using nlohmann::json;

constexpr Index kBenchItemsPerBlock = 50;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double peak_rss_mb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.starts_with("VmHWM:")) {
      std::istringstream fields(line.substr(6));
      double kb = 0.0;
      fields >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

json bench_row_json(const BenchRow& r) {
  return {{"n_items", r.n_items},
          {"n_users", r.n_users},
          {"n_interactions", r.n_interactions},
          {"epoch_seconds_min", r.epoch_seconds_min},
          {"epoch_seconds_median", r.epoch_seconds_median},
          {"rca_seconds", r.rca_seconds},
          {"sparse_seconds", r.sparse_seconds},
          {"similarity_seconds", r.similarity_seconds},
          {"sparse_f32_seconds", r.sparse_f32_seconds},
          {"peak_rss_mb", r.peak_rss_mb}};
}

BenchRow bench_row_from_json(const json& j) {
  BenchRow r;
  r.n_items = j.at("n_items").get<Index>();
  r.n_users = j.at("n_users").get<Index>();
  r.n_interactions = j.at("n_interactions").get<Index>();
  r.epoch_seconds_min = j.at("epoch_seconds_min").get<double>();
  r.epoch_seconds_median = j.at("epoch_seconds_median").get<double>();
  r.rca_seconds = j.at("rca_seconds").get<double>();
  r.sparse_seconds = j.at("sparse_seconds").get<double>();
  r.similarity_seconds = j.at("similarity_seconds").get<double>();
  r.sparse_f32_seconds = j.at("sparse_f32_seconds").get<double>();
  r.peak_rss_mb = j.at("peak_rss_mb").get<double>();
  return r;
}

// Runs fn in a forked child and returns what it wrote to the pipe. The
// child's exit status is nonzero if fn threw; its message is the payload.
std::string in_child(const std::function<std::string()>& fn) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    close(fds[0]);
    int code = 0;
    std::string payload;
    try {
      payload = fn();
    } catch (const std::exception& e) {
      payload = e.what();
      code = 1;
    }
    const char* p = payload.data();
    std::size_t left = payload.size();
    while (left > 0) {
      const ssize_t n = write(fds[1], p, left);
      if (n <= 0) _exit(2);
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    close(fds[1]);
    _exit(code);
  }
  close(fds[1]);
  std::string payload;
  char buf[4096];
  ssize_t n;
  while ((n = read(fds[0], buf, sizeof buf)) > 0) payload.append(buf, static_cast<std::size_t>(n));
  close(fds[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw std::runtime_error("bench child failed: " +
                             (payload.empty() ? std::string("abnormal exit") : payload));
  }
  return payload;
}

void write_metrics(const std::filesystem::path& path, const DatasetBundle& data,
                   const std::vector<MetricRow>& rows) {
  write_text_file(path, metrics_json({data.name, data.split_seed}, rows));
}

}  // namespace

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Train: return "train";
    case Command::Eval: return "eval";
    case Command::Ablate: return "ablate";
    case Command::Bench: return "bench";
  }
  return "?";
}

Command parse_command(std::string_view s) {
  for (Command c : {Command::Train, Command::Eval, Command::Ablate, Command::Bench})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown command '" + std::string(s) +
                              "' (expected train|eval|ablate|bench)");
}

TrainConfig resolve_config(const RunOptions& opt) {
  TrainConfig cfg = load_config(opt.config_path);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.split_seed = *opt.seed;
  }
  validate_config(cfg);
  return cfg;
}

DatasetBundle load_dataset(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                           bool synthetic) {
  if (synthetic || cfg.dataset == "synthetic")
    return synthetic_bundle(cfg.synthetic, cfg.split_seed, cfg.split_seed);
  const InteractionFile file = load_interactions(data_dir / cfg.interactions);
  const DenseMatrix visual = load_feature_matrix(data_dir / cfg.visual);
  const DenseMatrix textual = load_feature_matrix(data_dir / cfg.textual);
  for (const auto* m : {&visual, &textual}) {
    if (m->rows() != file.item_ids.size()) {
      throw std::invalid_argument(
          "feature matrix has " + std::to_string(m->rows()) + " rows but the interactions file has " +
          std::to_string(file.item_ids.size()) + " distinct items");
    }
  }
  const PreprocessResult pre = preprocess(file.records);
  return make_bundle(cfg.dataset, pre, visual, textual, cfg.split_seed);
}

Parallelism parallelism_for(const TrainConfig& cfg, std::size_t threads) {
  return Parallelism{cfg.deterministic, threads};
}

std::vector<MetricRow> evaluate_model(const TrainedModel& model, const DatasetBundle& data,
                                      const Parallelism& par) {
  const DenseMatrix z = inference_representations(model, data, par);
  const Index ks[] = {10, 20};
  std::vector<MetricRow> rows = evaluate_topk(z, data, Phase::Valid, ks, par);
  for (auto& r : evaluate_topk(z, data, Phase::Test, ks, par)) rows.push_back(r);
  return rows;
}

std::vector<TrainConfig> ablation_grid(const TrainConfig& cfg) {
  std::vector<TrainConfig> grid;
  auto with = [&](Variant v, Aggregation a) {
    TrainConfig c = cfg;
    c.variant = v;
    c.aggregation = a;
    validate_config(c);
    grid.push_back(std::move(c));
  };
  switch (cfg.ablate.grid) {
    case AblationGrid::Variants:
      for (Variant v : cfg.ablate.variants) with(v, cfg.aggregation);
      break;
    case AblationGrid::Fusion:
      for (Variant v : fusion_variants()) with(v, Aggregation::Sum);
      break;
    case AblationGrid::Aggregation:
      for (Aggregation a : cfg.ablate.aggregations) with(cfg.variant, a);
      break;
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const DatasetBundle& data,
                                      const Parallelism& par, std::ostream* log) {
  std::vector<AblationRow> rows;
  const Index ks[] = {20};
  for (const TrainConfig& c : ablation_grid(cfg)) {
    const TrainResult result = train(data, c, SeededRng(c.seed), par);
    const DenseMatrix z = inference_representations(result.best, data, par);
    AblationRow row;
    row.variant = c.variant;
    row.aggregation = c.aggregation;
    row.best_epoch = result.best_epoch;
    row.valid = evaluate_topk(z, data, Phase::Valid, ks, par).front();
    row.test = evaluate_topk(z, data, Phase::Test, ks, par).front();
    if (log != nullptr) {
      *log << "ablate " << to_string(c.variant) << "/" << to_string(c.aggregation)
           << ": best epoch " << row.best_epoch << ", valid NDCG@20 " << row.valid.ndcg
           << ", test Recall@20 " << row.test.recall << "\n";
    }
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_json(const MetricContext& ctx, const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"dataset", ctx.dataset},
                   {"split_seed", ctx.split_seed},
                   {"variant", to_string(r.variant)},
                   {"aggregation", to_string(r.aggregation)},
                   {"phase", to_string(r.test.phase)},
                   {"K", r.test.k},
                   {"recall", r.test.recall},
                   {"ndcg", r.test.ndcg},
                   {"n_users", r.test.n_users},
                   {"valid_recall", r.valid.recall},
                   {"valid_ndcg", r.valid.ndcg},
                   {"best_epoch", r.best_epoch}});
  }
  return out.dump(2) + "\n";
}

DatasetBundle bench_bundle(const TrainConfig& cfg, Index n_items) {
  SyntheticSpec spec = cfg.synthetic;
  spec.items = n_items;
  spec.blocks = std::max<Index>(1, n_items / kBenchItemsPerBlock);
  spec.users = std::max(spec.blocks, static_cast<Index>(std::llround(
                                         cfg.bench.users_per_item * static_cast<double>(n_items))));
  spec.interactions_per_user = cfg.bench.interactions_per_user;
  const SyntheticData data = generate_synthetic(spec, cfg.seed);

  // Built directly rather than through preprocess so that items nobody
  // rated stay in the graph and the item count is exactly n_items.
  PreprocessResult pre;
  pre.n_users = spec.users;
  pre.n_items = n_items;
  for (const auto& r : data.records) pre.pairs.push_back({r.user, r.item});
  std::sort(pre.pairs.begin(), pre.pairs.end());
  pre.pairs.erase(std::unique(pre.pairs.begin(), pre.pairs.end()), pre.pairs.end());
  pre.user_origin.resize(pre.n_users);
  pre.item_origin.resize(pre.n_items);
  for (Index u = 0; u < pre.n_users; ++u) pre.user_origin[u] = u;
  for (Index i = 0; i < pre.n_items; ++i) pre.item_origin[i] = i;
  return make_bundle("bench", pre, data.visual, data.textual, cfg.split_seed);
}

BenchRow bench_point(const TrainConfig& cfg, Index n_items, const Parallelism& par) {
  const DatasetBundle data = bench_bundle(cfg, n_items);
  TrainConfig c = cfg;
  c.rebuild_interval = 1;
  StageClock clock;
  Trainer trainer(data, c, SeededRng(c.seed), par, &clock);

  std::vector<double> epoch;
  std::vector<double> rca;
  std::vector<double> sparse;
  std::vector<double> similarity;
  std::vector<double> sparse_f32;
  for (Index r = 0; r < cfg.bench.repeats; ++r) {
    clock.reset();
    const auto start = std::chrono::steady_clock::now();
    trainer.run_epoch(r + 1, cfg.bench.steps_per_epoch);
    epoch.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    rca.push_back(clock.seconds(Stage::Rca));
    sparse.push_back(clock.seconds(Stage::Sparse));
    similarity.push_back(clock.seconds(Stage::Similarity));

    if (cfg.bench.storage == Storage::F32) {
      const CsrMatrixF32 adj = to_f32(full_propagation_graph(data.graph).adjacency_sym);
      DenseMatrix e = trainer.model().branches.front().id_emb;
      const auto t0 = std::chrono::steady_clock::now();
      for (Index l = 0; l < cfg.L_ui; ++l) e = spmm(adj, e, par);
      sparse_f32.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }

  BenchRow row;
  row.n_items = data.n_items;
  row.n_users = data.n_users;
  row.n_interactions = data.split.train.size() + data.split.valid.size() + data.split.test.size();
  row.epoch_seconds_min = *std::min_element(epoch.begin(), epoch.end());
  row.epoch_seconds_median = median(epoch);
  row.rca_seconds = *std::min_element(rca.begin(), rca.end());
  row.sparse_seconds = *std::min_element(sparse.begin(), sparse.end());
  row.similarity_seconds = *std::min_element(similarity.begin(), similarity.end());
  if (!sparse_f32.empty())
    row.sparse_f32_seconds = *std::min_element(sparse_f32.begin(), sparse_f32.end());
  return row;
}

std::vector<BenchRow> run_bench(const TrainConfig& cfg, const Parallelism& par,
                                std::ostream* log) {
  std::vector<BenchRow> rows;
  for (Index n : cfg.bench.items) {
    const std::string payload = in_child([&] {
      BenchRow row = bench_point(cfg, n, par);
      row.peak_rss_mb = peak_rss_mb();
      return bench_row_json(row).dump();
    });
    rows.push_back(bench_row_from_json(json::parse(payload)));
    if (log != nullptr) {
      const BenchRow& r = rows.back();
      *log << "bench N=" << r.n_items << ": epoch " << r.epoch_seconds_min << " s (rca "
           << r.rca_seconds << ", sparse " << r.sparse_seconds << ", similarity "
           << r.similarity_seconds << "), peak RSS " << r.peak_rss_mb << " MB\n";
    }
  }
  return rows;
}

std::string bench_json(const TrainConfig& cfg, const std::vector<BenchRow>& rows) {
  json table = json::array();
  for (const auto& r : rows) table.push_back(bench_row_json(r));
  const json out{{"storage", to_string(cfg.bench.storage)},
                 {"repeats", cfg.bench.repeats},
                 {"steps_per_epoch", cfg.bench.steps_per_epoch},
                 {"rows", std::move(table)}};
  return out.dump(2) + "\n";
}

int run_experiment(Command command, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (command == Command::Eval) {
      // Model and data settings come from the checkpoint so the evaluation
      // sees the split the model was trained on.
      resolve_config(opt);
      const Checkpoint ckpt = parse_checkpoint(read_text_file(opt.out_dir / "checkpoint.json"));
      const TrainConfig cfg = parse_config(ckpt.config_text);
      const Parallelism par = parallelism_for(cfg, opt.threads);
      const DatasetBundle data = load_dataset(cfg, opt.data_dir, opt.synthetic);
      const auto rows = evaluate_model(ckpt.model, data, par);
      write_metrics(opt.out_dir / "metrics.json", data, rows);
      for (const auto& r : rows) {
        out << to_string(r.phase) << " Recall@" << r.k << " " << r.recall << "  NDCG@" << r.k
            << " " << r.ndcg << "\n";
      }
      return 0;
    }

    const TrainConfig cfg = resolve_config(opt);
    const Parallelism par = parallelism_for(cfg, opt.threads);
    std::filesystem::create_directories(opt.out_dir);

    if (command == Command::Bench) {
      const auto rows = run_bench(cfg, par, &out);
      write_text_file(opt.out_dir / "bench.json", bench_json(cfg, rows));
      return 0;
    }

    const DatasetBundle data = load_dataset(cfg, opt.data_dir, opt.synthetic);
    out << "dataset " << data.name << ": " << data.n_users << " users, " << data.n_items
        << " items, " << data.split.train.size() << " training interactions\n";

    if (command == Command::Ablate) {
      const auto rows = run_ablation(cfg, data, par, &out);
      write_text_file(opt.out_dir / "ablation.json",
                      ablation_json({data.name, data.split_seed}, rows));
      return 0;
    }

    const TrainResult result =
        train(data, cfg, SeededRng(cfg.seed), par, [&](const EpochRecord& r) {
          out << "epoch " << r.epoch << " loss " << r.loss_total << " valid Recall@20 "
              << r.recall20_valid << " NDCG@20 " << r.ndcg20_valid << "\n";
        });
    write_text_file(opt.out_dir / "checkpoint.json",
                    checkpoint_json({serialize_config(cfg), result.best_epoch, result.best}));
    write_text_file(opt.out_dir / "convergence.jsonl", convergence_jsonl(result.log));
    emit_convergence_plot(result.log, opt.out_dir / "convergence.svg");
    write_metrics(opt.out_dir / "metrics.json", data, evaluate_model(result.best, data, par));
    out << "best epoch " << result.best_epoch << "; outputs in " << opt.out_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "crane " << to_string(command) << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace crane
