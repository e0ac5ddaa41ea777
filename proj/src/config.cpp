#include "crane/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace crane {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Variant, 12> kVariantNames{{
    {Variant::Full, "full"},
    {Variant::WoItemGraph, "wo_item_graph"},
    {Variant::WoRca, "wo_rca"},
    {Variant::WoAttention, "wo_attention"},
    {Variant::WoGcn, "wo_gcn"},
    {Variant::WoCl, "wo_cl"},
    {Variant::WoDualFusion, "wo_dual_fusion"},
    {Variant::CraneV, "crane_v"},
    {Variant::CraneT, "crane_t"},
    {Variant::CraneC, "crane_c"},
    {Variant::CraneS, "crane_s"},
    {Variant::CraneA, "crane_a"},
}};
constexpr NameTable<Aggregation, 4> kAggregationNames{{
    {Aggregation::Sum, "sum"},
    {Aggregation::Mean, "mean"},
    {Aggregation::Max, "max"},
    {Aggregation::Attention, "attention"},
}};
constexpr NameTable<GcnActivation, 2> kActivationNames{{
    {GcnActivation::None, "none"},
    {GcnActivation::LeakyRelu, "leaky_relu"},
}};
constexpr NameTable<LayerReadout, 2> kReadoutNames{{
    {LayerReadout::Mean, "mean"},
    {LayerReadout::Last, "last"},
}};
constexpr NameTable<AblationGrid, 3> kGridNames{{
    {AblationGrid::Variants, "variants"},
    {AblationGrid::Fusion, "fusion"},
    {AblationGrid::Aggregation, "aggregation"},
}};
constexpr NameTable<Storage, 2> kStorageNames{{
    {Storage::F64, "f64"},
    {Storage::F32, "f32"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  return "?";
}

template <typename E, std::size_t N>
E value_of(const NameTable<E, N>& table, std::string_view name, std::string_view what) {
  for (const auto& [e, n] : table)
    if (n == name) return e;
  std::string allowed;
  for (const auto& [e, n] : table) allowed += (allowed.empty() ? "" : "|") + std::string(n);
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(name) + "' (expected " +
                    allowed + ")");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    const auto piece = trim(s.substr(0, comma));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a real number, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

Field index_field(std::string_view section, std::string_view key, Index TrainConfig::*member) {
  return {section, key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member](TrainConfig& c, std::string_view v) { c.*member = parse_u64(v); }};
}

Field real_field(std::string_view section, std::string_view key, double TrainConfig::*member) {
  return {section, key, [member](const TrainConfig& c) { return format_double(c.*member); },
          [member](TrainConfig& c, std::string_view v) { c.*member = parse_double(v); }};
}

Field text_field(std::string_view section, std::string_view key,
                 std::string TrainConfig::*member) {
  return {section, key, [member](const TrainConfig& c) { return c.*member; },
          [member](TrainConfig& c, std::string_view v) { c.*member = std::string(v); }};
}

template <typename Spec, typename T>
Field nested_index(std::string_view section, std::string_view key, Spec TrainConfig::*outer,
                   T Spec::*member) {
  return {section, key,
          [=](const TrainConfig& c) { return std::to_string(c.*outer.*member); },
          [=](TrainConfig& c, std::string_view v) { c.*outer.*member = parse_u64(v); }};
}

template <typename Spec>
Field nested_real(std::string_view section, std::string_view key, Spec TrainConfig::*outer,
                  double Spec::*member) {
  return {section, key, [=](const TrainConfig& c) { return format_double(c.*outer.*member); },
          [=](TrainConfig& c, std::string_view v) { c.*outer.*member = parse_double(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text_field("data", "dataset", &TrainConfig::dataset));
    f.push_back(text_field("data", "interactions", &TrainConfig::interactions));
    f.push_back(text_field("data", "visual", &TrainConfig::visual));
    f.push_back(text_field("data", "textual", &TrainConfig::textual));
    f.push_back({"data", "split_seed",
                 [](const TrainConfig& c) { return std::to_string(c.split_seed); },
                 [](TrainConfig& c, std::string_view v) { c.split_seed = parse_u64(v); }});

    f.push_back(index_field("model", "d", &TrainConfig::d));
    f.push_back(index_field("model", "d_lat", &TrainConfig::d_lat));
    f.push_back(index_field("model", "d_joint", &TrainConfig::d_joint));
    f.push_back(index_field("model", "L_ui", &TrainConfig::L_ui));
    f.push_back(index_field("model", "L_ii", &TrainConfig::L_ii));
    f.push_back(index_field("model", "R", &TrainConfig::R));
    f.push_back(index_field("model", "k", &TrainConfig::k));
    f.push_back({"model", "trainable_gcn",
                 [](const TrainConfig& c) { return format_bool(c.trainable_gcn); },
                 [](TrainConfig& c, std::string_view v) { c.trainable_gcn = parse_bool(v); }});
    f.push_back({"model", "gcn_activation",
                 [](const TrainConfig& c) { return std::string(to_string(c.gcn_activation)); },
                 [](TrainConfig& c, std::string_view v) {
                   c.gcn_activation = value_of(kActivationNames, v, "gcn_activation");
                 }});
    f.push_back({"model", "layer_readout",
                 [](const TrainConfig& c) { return std::string(to_string(c.layer_readout)); },
                 [](TrainConfig& c, std::string_view v) {
                   c.layer_readout = value_of(kReadoutNames, v, "layer_readout");
                 }});
    f.push_back({"model", "variant",
                 [](const TrainConfig& c) { return std::string(to_string(c.variant)); },
                 [](TrainConfig& c, std::string_view v) { c.variant = parse_variant(v); }});
    f.push_back({"model", "aggregation",
                 [](const TrainConfig& c) { return std::string(to_string(c.aggregation)); },
                 [](TrainConfig& c, std::string_view v) { c.aggregation = parse_aggregation(v); }});
    f.push_back(index_field("model", "similarity_block", &TrainConfig::similarity_block));
    f.push_back(index_field("model", "correlation_block", &TrainConfig::correlation_block));

    f.push_back(real_field("train", "lr", &TrainConfig::lr));
    f.push_back(real_field("train", "lambda", &TrainConfig::lambda));
    f.push_back(real_field("train", "tau", &TrainConfig::tau));
    f.push_back(real_field("train", "beta", &TrainConfig::beta));
    f.push_back(index_field("train", "batch_size", &TrainConfig::batch_size));
    f.push_back(index_field("train", "max_epochs", &TrainConfig::max_epochs));
    f.push_back(index_field("train", "patience", &TrainConfig::patience));
    f.push_back(index_field("train", "rebuild_interval", &TrainConfig::rebuild_interval));
    f.push_back({"train", "seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
                 [](TrainConfig& c, std::string_view v) { c.seed = parse_u64(v); }});
    f.push_back({"train", "deterministic",
                 [](const TrainConfig& c) { return format_bool(c.deterministic); },
                 [](TrainConfig& c, std::string_view v) { c.deterministic = parse_bool(v); }});

    using S = SyntheticSpec;
    f.push_back(nested_index("synthetic", "users", &TrainConfig::synthetic, &S::users));
    f.push_back(nested_index("synthetic", "items", &TrainConfig::synthetic, &S::items));
    f.push_back(nested_index("synthetic", "blocks", &TrainConfig::synthetic, &S::blocks));
    f.push_back(nested_index("synthetic", "interactions_per_user", &TrainConfig::synthetic,
                             &S::interactions_per_user));
    f.push_back(nested_index("synthetic", "visual_dim", &TrainConfig::synthetic, &S::visual_dim));
    f.push_back(
        nested_index("synthetic", "textual_dim", &TrainConfig::synthetic, &S::textual_dim));
    f.push_back(nested_real("synthetic", "noise", &TrainConfig::synthetic, &S::noise));

    f.push_back({"ablate", "grid",
                 [](const TrainConfig& c) { return std::string(to_string(c.ablate.grid)); },
                 [](TrainConfig& c, std::string_view v) {
                   c.ablate.grid = value_of(kGridNames, v, "ablation grid");
                 }});
    f.push_back({"ablate", "variants",
                 [](const TrainConfig& c) {
                   std::string out;
                   for (auto v : c.ablate.variants)
                     out += (out.empty() ? "" : ", ") + std::string(to_string(v));
                   return out;
                 },
                 [](TrainConfig& c, std::string_view v) {
                   c.ablate.variants.clear();
                   for (auto piece : split_list(v)) c.ablate.variants.push_back(parse_variant(piece));
                 }});
    f.push_back({"ablate", "aggregations",
                 [](const TrainConfig& c) {
                   std::string out;
                   for (auto a : c.ablate.aggregations)
                     out += (out.empty() ? "" : ", ") + std::string(to_string(a));
                   return out;
                 },
                 [](TrainConfig& c, std::string_view v) {
                   c.ablate.aggregations.clear();
                   for (auto piece : split_list(v))
                     c.ablate.aggregations.push_back(parse_aggregation(piece));
                 }});

    using B = BenchSpec;
    f.push_back({"bench", "items",
                 [](const TrainConfig& c) {
                   std::string out;
                   for (auto n : c.bench.items) out += (out.empty() ? "" : ", ") + std::to_string(n);
                   return out;
                 },
                 [](TrainConfig& c, std::string_view v) {
                   c.bench.items.clear();
                   for (auto piece : split_list(v)) c.bench.items.push_back(parse_u64(piece));
                 }});
    f.push_back(nested_real("bench", "users_per_item", &TrainConfig::bench, &B::users_per_item));
    f.push_back(nested_index("bench", "interactions_per_user", &TrainConfig::bench,
                             &B::interactions_per_user));
    f.push_back(
        nested_index("bench", "steps_per_epoch", &TrainConfig::bench, &B::steps_per_epoch));
    f.push_back(nested_index("bench", "repeats", &TrainConfig::bench, &B::repeats));
    f.push_back({"bench", "storage",
                 [](const TrainConfig& c) { return std::string(to_string(c.bench.storage)); },
                 [](TrainConfig& c, std::string_view v) {
                   c.bench.storage = value_of(kStorageNames, v, "storage");
                 }});
    return f;
  }();
  return table;
}

constexpr std::array<std::string_view, 6> kSections{"data",      "model",  "train",
                                                    "synthetic", "ablate", "bench"};

}  // namespace

std::string_view to_string(Variant v) { return name_of(kVariantNames, v); }
std::string_view to_string(Aggregation a) { return name_of(kAggregationNames, a); }
std::string_view to_string(GcnActivation a) { return name_of(kActivationNames, a); }
std::string_view to_string(LayerReadout r) { return name_of(kReadoutNames, r); }
std::string_view to_string(AblationGrid g) { return name_of(kGridNames, g); }
std::string_view to_string(Storage s) { return name_of(kStorageNames, s); }

Variant parse_variant(std::string_view s) { return value_of(kVariantNames, s, "variant"); }
Aggregation parse_aggregation(std::string_view s) {
  return value_of(kAggregationNames, s, "aggregation");
}

std::vector<Variant> ablation_variants() {
  return {Variant::Full,   Variant::WoItemGraph, Variant::WoRca,       Variant::WoAttention,
          Variant::WoGcn,  Variant::WoCl,        Variant::WoDualFusion};
}

std::vector<Variant> fusion_variants() {
  return {Variant::Full,   Variant::CraneV, Variant::CraneT,
          Variant::CraneC, Variant::CraneS, Variant::CraneA};
}

void apply_dataset_preset(TrainConfig& c, std::string_view dataset) {
  struct Column {
    std::string_view name;
    Index R, k;
    double lr, lambda, tau, beta;
  };
  // Per-dataset optimum of the published hyperparameter table.
  static constexpr std::array<Column, 4> kTable{{
      {"baby", 3, 15, 1e-4, 1e-3, 0.6, 0.8},
      {"sports", 2, 15, 5e-5, 1e-3, 0.5, 0.7},
      {"clothing", 3, 10, 1e-4, 1e-3, 0.4, 0.7},
      {"electronics", 3, 10, 1e-4, 5e-4, 0.5, 0.6},
  }};
  c.dataset = std::string(dataset);
  c.d = c.d_lat = c.d_joint = 64;
  c.L_ui = 2;
  c.L_ii = 1;
  c.batch_size = 1024;
  c.max_epochs = 250;
  c.patience = 5;
  if (dataset == "synthetic") {
    // Baby column scaled down to a 20 x 30 toy problem. Five steps per epoch
    // at 2.5e-3 move Adam as far per epoch as Baby's ~126 steps at 1e-4.
    c.d = c.d_lat = c.d_joint = 16;
    c.R = 3;
    c.k = 5;
    c.lr = 2.5e-3;
    c.lambda = 1e-3;
    c.tau = 0.6;
    c.beta = 0.8;
    c.batch_size = 32;
    c.max_epochs = 200;
    return;
  }
  for (const auto& col : kTable) {
    if (col.name == dataset) {
      c.R = col.R;
      c.k = col.k;
      c.lr = col.lr;
      c.lambda = col.lambda;
      c.tau = col.tau;
      c.beta = col.beta;
      return;
    }
  }
  throw ConfigError("unknown dataset '" + std::string(dataset) +
                    "' (expected baby|sports|clothing|electronics|synthetic)");
}

TrainConfig default_config(std::string_view dataset) {
  TrainConfig c;
  apply_dataset_preset(c, dataset);
  return c;
}

TrainConfig parse_config(std::string_view text) {
  struct Entry {
    const Field* field;
    std::string value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::map<std::string, std::size_t> seen;
  std::string section;
  std::size_t line_no = 0;
  std::string_view dataset = "baby";
  std::string dataset_storage;

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        throw ConfigError(where() + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where() + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where() + "key outside of any section");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const Field* match = nullptr;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) match = &f;
    }
    if (match == nullptr) {
      throw ConfigError(where() + "unknown key '" + std::string(key) + "' in [" + section + "]");
    }
    const std::string full = section + "." + std::string(key);
    if (seen.count(full) != 0) {
      throw ConfigError(where() + "duplicate key '" + full + "' (first set on line " +
                        std::to_string(seen[full]) + ")");
    }
    seen[full] = line_no;
    if (full == "data.dataset") {
      dataset_storage = std::string(value);
      dataset = dataset_storage;
    }
    entries.push_back({match, std::string(value), line_no});
  }

  TrainConfig cfg;
  try {
    apply_dataset_preset(cfg, dataset);
  } catch (const ConfigError& e) {
    throw ConfigError("config line " + std::to_string(seen["data.dataset"]) + ": " + e.what());
  }
  for (const auto& e : entries) {
    try {
      e.field->set(cfg, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("config line " + std::to_string(e.line) + " (" +
                        std::string(e.field->key) + "): " + err.what());
    }
  }
  validate_config(cfg);
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (auto section : kSections) {
    if (!out.empty()) out += "\n";
    out += "[" + std::string(section) + "]\n";
    for (const auto& f : fields()) {
      if (f.section == section) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
    }
  }
  return out;
}

void validate_config(const TrainConfig& c) {
  auto positive = [](Index v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(c.d, "d");
  positive(c.d_lat, "d_lat");
  positive(c.d_joint, "d_joint");
  positive(c.L_ui, "L_ui");
  positive(c.L_ii, "L_ii");
  positive(c.k, "k");
  positive(c.batch_size, "batch_size");
  positive(c.max_epochs, "max_epochs");
  positive(c.similarity_block, "similarity_block");
  positive(c.correlation_block, "correlation_block");
  if (!(c.tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(c.beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(c.lr >= 0.0)) throw ConfigError("lr must be non-negative");

  const bool builds_profiles = c.variant == Variant::Full || c.variant == Variant::WoRca ||
                               c.variant == Variant::WoAttention || c.variant == Variant::WoCl ||
                               c.variant == Variant::WoDualFusion;
  if (c.aggregation != Aggregation::Sum && !builds_profiles) {
    throw ConfigError("aggregation '" + std::string(to_string(c.aggregation)) +
                      "' has no effect for variant '" + std::string(to_string(c.variant)) +
                      "', which builds no user modality profiles");
  }
  if (c.ablate.variants.empty()) throw ConfigError("ablate.variants must not be empty");
  if (c.ablate.aggregations.empty()) throw ConfigError("ablate.aggregations must not be empty");
  if (c.bench.items.empty()) throw ConfigError("bench.items must not be empty");
  positive(c.bench.repeats, "bench.repeats");
  positive(c.bench.steps_per_epoch, "bench.steps_per_epoch");
  if (c.synthetic.blocks == 0 || c.synthetic.items < c.synthetic.blocks)
    throw ConfigError("synthetic.blocks must be between 1 and synthetic.items");
}

}  // namespace crane
