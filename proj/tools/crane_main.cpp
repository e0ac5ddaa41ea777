#include <iostream>

#include <CLI11.hpp>

#include "crane/experiment.hpp"
#include "crane/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multimodal graph recommender: training, evaluation, ablations and benchmarks"};
  app.require_subcommand(1);

  crane::RunOptions opt;
  std::uint64_t seed = 0;
  for (auto name : {"train", "eval", "ablate", "bench"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "Config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--data-dir", opt.data_dir, "Directory with the interaction and feature files");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--seed", seed, "Overrides the training and split seeds");
    sub->add_flag("--synthetic", opt.synthetic, "Use the planted-block generator");
  }
  CLI11_PARSE(app, argc, argv);

  const auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed") > 0) opt.seed = seed;
  opt.threads = crane::threads_from_env();
  return crane::run_experiment(crane::parse_command(chosen->get_name()), opt, std::cout,
                               std::cerr);
}
