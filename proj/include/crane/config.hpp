#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crane/dense.hpp"

namespace crane {

enum class Variant {
  Full,
  WoItemGraph,
  WoRca,
  WoAttention,
  WoGcn,
  WoCl,
  WoDualFusion,
  CraneV,
  CraneT,
  CraneC,
  CraneS,
  CraneA,
};

enum class Aggregation { Sum, Mean, Max, Attention };
enum class GcnActivation { None, LeakyRelu };
enum class LayerReadout { Mean, Last };
enum class AblationGrid { Variants, Fusion, Aggregation };
enum class Storage { F64, F32 };

std::string_view to_string(Variant v);
std::string_view to_string(Aggregation a);
std::string_view to_string(GcnActivation a);
std::string_view to_string(LayerReadout r);
std::string_view to_string(AblationGrid g);
std::string_view to_string(Storage s);

Variant parse_variant(std::string_view s);
Aggregation parse_aggregation(std::string_view s);

/// The full + six ablations, and the five fusion strategies.
std::vector<Variant> ablation_variants();
std::vector<Variant> fusion_variants();

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Planted-block generator settings.
struct SyntheticSpec {
  Index users = 20;
  Index items = 30;
  Index blocks = 2;
  Index interactions_per_user = 10;
  Index visual_dim = 32;
  Index textual_dim = 16;
  double noise = 0.3;

  bool operator==(const SyntheticSpec&) const = default;
};

struct AblateSpec {
  AblationGrid grid = AblationGrid::Variants;
  std::vector<Variant> variants = ablation_variants();
  std::vector<Aggregation> aggregations = {Aggregation::Sum, Aggregation::Mean, Aggregation::Max,
                                           Aggregation::Attention};

  bool operator==(const AblateSpec&) const = default;
};

struct BenchSpec {
  std::vector<Index> items = {1000, 2000, 4000, 8000};
  double users_per_item = 0.25;
  Index interactions_per_user = 8;
  Index steps_per_epoch = 1;
  Index repeats = 2;
  Storage storage = Storage::F64;

  bool operator==(const BenchSpec&) const = default;
};

/// Every hyperparameter of a run. Field names follow the config file keys.
struct TrainConfig {
  // [data]
  std::string dataset = "baby";
  std::string interactions = "interactions.tsv";
  std::string visual = "visual.crnf";
  std::string textual = "textual.crnf";
  std::uint64_t split_seed = 9;

  // [model]
  Index d = 64;
  Index d_lat = 64;
  Index d_joint = 64;
  Index L_ui = 2;
  Index L_ii = 1;
  Index R = 3;
  Index k = 15;
  bool trainable_gcn = false;
  GcnActivation gcn_activation = GcnActivation::None;
  LayerReadout layer_readout = LayerReadout::Mean;
  Variant variant = Variant::Full;
  Aggregation aggregation = Aggregation::Sum;
  Index similarity_block = 256;
  Index correlation_block = 256;

  // [train]
  double lr = 1e-4;
  double lambda = 1e-3;
  double tau = 0.6;
  double beta = 0.8;
  Index batch_size = 1024;
  Index max_epochs = 250;
  Index patience = 5;
  Index rebuild_interval = 1;
  std::uint64_t seed = 9;
  bool deterministic = true;

  SyntheticSpec synthetic;
  AblateSpec ablate;
  BenchSpec bench;

  bool operator==(const TrainConfig&) const = default;
};

/// Overwrites the per-dataset hyperparameters (baby, sports, clothing,
/// electronics, synthetic).
void apply_dataset_preset(TrainConfig& cfg, std::string_view dataset);

TrainConfig default_config(std::string_view dataset = "baby");

/// Parses `key = value` lines grouped under [data], [model], [train],
/// [synthetic], [ablate] and [bench]. The dataset preset is applied first,
/// then every explicit key. Unknown sections or keys are rejected.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

/// Canonical text: every section and key in fixed order.
std::string serialize_config(const TrainConfig& cfg);

/// Rejects inconsistent settings (e.g. an aggregation strategy on a variant
/// that never builds user modality profiles).
void validate_config(const TrainConfig& cfg);

}  // namespace crane
