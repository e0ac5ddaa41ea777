#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "crane/experiment.hpp"
#include "crane/io.hpp"

using namespace crane;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("crane_exp_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& text) {
  const auto path = dir / "run.conf";
  write_text_file(path, text);
  return path;
}

const char* kShortSynthetic = "[data]\ndataset = synthetic\n[train]\nmax_epochs = 4\n";

}  // namespace

TEST_CASE("ablate on synthetic data emits one row per variant") {
  const auto dir = scratch_dir("ablate");
  RunOptions opt;
  opt.config_path = write_config(dir, kShortSynthetic);
  opt.out_dir = dir / "out";
  std::ostringstream out, err;
  REQUIRE(run_experiment(Command::Ablate, opt, out, err) == 0);
  const auto rows = nlohmann::json::parse(read_text_file(opt.out_dir / "ablation.json"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0]["variant"] == "full");
  CHECK(rows[6]["variant"] == "wo_dual_fusion");
  for (const auto& r : rows) {
    CHECK(r["dataset"] == "synthetic");
    CHECK(r["K"] == 20);
    CHECK(r.contains("valid_ndcg"));
  }
}

TEST_CASE("aggregation and fusion grids") {
  TrainConfig cfg = default_config("synthetic");
  cfg.max_epochs = 2;
  cfg.ablate.grid = AblationGrid::Aggregation;
  const DatasetBundle data = synthetic_bundle(cfg.synthetic, 9, 9);
  const auto agg = run_ablation(cfg, data);
  REQUIRE(agg.size() == 4);
  CHECK(agg[0].aggregation == Aggregation::Sum);
  CHECK(agg[3].aggregation == Aggregation::Attention);
  cfg.ablate.grid = AblationGrid::Fusion;
  CHECK(ablation_grid(cfg).size() == 6);
}

TEST_CASE("train is byte-for-byte deterministic and eval reproduces its metrics") {
  const auto dir = scratch_dir("determinism");
  RunOptions opt;
  opt.config_path = write_config(dir, kShortSynthetic);
  opt.seed = 672;
  std::ostringstream out, err;
  opt.out_dir = dir / "a";
  REQUIRE(run_experiment(Command::Train, opt, out, err) == 0);
  opt.out_dir = dir / "b";
  REQUIRE(run_experiment(Command::Train, opt, out, err) == 0);
  for (const char* file : {"metrics.json", "convergence.svg", "checkpoint.json"})
    CHECK(read_text_file(dir / "a" / file) == read_text_file(dir / "b" / file));

  const std::string trained = read_text_file(dir / "a" / "metrics.json");
  CHECK(trained.find("\"split_seed\": 672") != std::string::npos);
  opt.out_dir = dir / "a";
  REQUIRE(run_experiment(Command::Eval, opt, out, err) == 0);
  CHECK(read_text_file(dir / "a" / "metrics.json") == trained);
}

TEST_CASE("training from files on disk") {
  const auto dir = scratch_dir("files");
  const SyntheticData syn = generate_synthetic(SyntheticSpec{}, 3);
  std::string tsv;
  for (const auto& r : syn.records)
    tsv += "user" + std::to_string(r.user) + "\titem" + std::to_string(r.item) + "\t" +
           std::to_string(int(r.rating)) + "\n";
  // The feature rows follow the first appearance of each item in the file.
  const InteractionFile parsed = parse_interactions(tsv);
  DenseMatrix visual(parsed.item_ids.size(), syn.visual.cols());
  DenseMatrix textual(parsed.item_ids.size(), syn.textual.cols());
  for (Index r = 0; r < parsed.item_ids.size(); ++r) {
    const Index item = std::stoul(parsed.item_ids[r].substr(4));
    std::copy(syn.visual.row(item).begin(), syn.visual.row(item).end(), visual.row(r).begin());
    std::copy(syn.textual.row(item).begin(), syn.textual.row(item).end(), textual.row(r).begin());
  }
  write_text_file(dir / "interactions.tsv", tsv);
  save_feature_matrix(dir / "visual.crnf", visual, FeatureDtype::F32);
  save_feature_matrix(dir / "textual.crnf", textual);

  RunOptions opt;
  opt.config_path =
      write_config(dir, "[data]\ndataset = baby\n[model]\nk = 5\nd = 8\nd_lat = 8\nd_joint = 8\n"
                        "[train]\nmax_epochs = 2\nbatch_size = 64\n");
  opt.data_dir = dir;
  opt.out_dir = dir / "out";
  std::ostringstream out, err;
  CHECK(run_experiment(Command::Train, opt, out, err) == 0);
  INFO(err.str());
  CHECK(out.str().find("20 users, 30 items") != std::string::npos);

  save_feature_matrix(dir / "textual.crnf", DenseMatrix(3, 2));
  std::ostringstream err2;
  CHECK(run_experiment(Command::Train, opt, out, err2) != 0);
  CHECK(err2.str().find("distinct items") != std::string::npos);
}

TEST_CASE("failures produce a nonzero status and a diagnostic") {
  const auto dir = scratch_dir("fail");
  RunOptions opt;
  opt.config_path = write_config(dir, "[data]\ndataset = baby\n");
  opt.data_dir = dir;
  opt.out_dir = dir / "out";
  std::ostringstream out, err;
  CHECK(run_experiment(Command::Train, opt, out, err) == 1);
  CHECK(err.str().find("interactions.tsv") != std::string::npos);

  opt.config_path = write_config(dir, "[model]\nbogus = 1\n");
  std::ostringstream err2;
  CHECK(run_experiment(Command::Ablate, opt, out, err2) == 1);
  CHECK(err2.str().find("bogus") != std::string::npos);

  std::ostringstream err3;
  CHECK(run_experiment(Command::Eval, opt, out, err3) == 1);
  CHECK_THROWS(parse_command("serve"));
}

TEST_CASE("bench measures each item count in a child process") {
  TrainConfig cfg = default_config("synthetic");
  cfg.bench.items = {100, 200};
  cfg.bench.repeats = 1;
  cfg.bench.storage = Storage::F32;
  const auto rows = run_bench(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n_items == 100);
  CHECK(rows[1].n_items == 200);
  CHECK(rows[1].n_users == 50);
  CHECK(rows[1].n_interactions == 50 * cfg.bench.interactions_per_user);
  for (const auto& r : rows) {
    CHECK(r.peak_rss_mb > 0.0);
    CHECK(r.rca_seconds > 0.0);
    CHECK(r.sparse_f32_seconds > 0.0);
    CHECK(r.epoch_seconds_min >= r.rca_seconds);
  }
  const auto j = nlohmann::json::parse(bench_json(cfg, rows));
  CHECK(j["storage"] == "f32");
  CHECK(j["rows"].size() == 2);
}
