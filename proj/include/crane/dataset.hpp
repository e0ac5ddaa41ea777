#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crane/config.hpp"
#include "crane/dense.hpp"
#include "crane/graph.hpp"
#include "crane/model.hpp"

namespace crane {

/// One rating record; user and item are dense indices from the loader, and
/// the item index also addresses the rows of the raw feature matrices.
struct RawInteraction {
  Index user = 0;
  Index item = 0;
  double rating = 0.0;
};

struct PreprocessResult {
  std::vector<Interaction> pairs;  // sorted by (user, item)
  Index n_users = 0;
  Index n_items = 0;
  std::vector<Index> user_origin;  // new user index -> raw user index
  std::vector<Index> item_origin;  // new item index -> raw item index
};

inline constexpr Index kMinUserInteractions = 4;

/// Validates ratings (1..5), keeps one binary pair per (user, item), drops
/// users with fewer than four distinct items and reindexes the survivors
/// densely in ascending raw order. Throws if nothing survives.
PreprocessResult preprocess(std::span<const RawInteraction> raw,
                            Index min_interactions = kMinUserInteractions);

/// Per-user 8:1:1 partition seeded by `seed`.
struct SplitSpec {
  std::uint64_t seed = 9;
};

struct DataSplit {
  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;

  bool operator==(const DataSplit&) const = default;
};

/// Test and validation counts for a user with n interactions: test takes
/// ceil(n/10), valid floor(n/10), both capped so train keeps at least one.
struct SplitCounts {
  Index train = 0;
  Index valid = 0;
  Index test = 0;
};
SplitCounts split_counts(Index n);

/// Users are visited in index order; each user's items (ascending) are
/// shuffled with one shared stream, then cut into test, valid, train.
/// Every output list is sorted by (user, item).
DataSplit split_811(std::span<const Interaction> pairs, Index n_users, const SplitSpec& spec);

enum class Phase { Valid, Test };
std::string_view to_string(Phase p);

/// A preprocessed, split dataset with its training graph and features.
struct DatasetBundle {
  std::string name;
  std::uint64_t split_seed = 0;
  Index n_users = 0;
  Index n_items = 0;
  DataSplit split;
  InteractionGraph graph;  // training interactions only
  ModalityFeatures feats;
  std::vector<std::vector<Index>> valid_by_user;
  std::vector<std::vector<Index>> test_by_user;

  /// Items to rank against in a phase.
  const std::vector<std::vector<Index>>& relevant(Phase p) const {
    return p == Phase::Valid ? valid_by_user : test_by_user;
  }
};

/// Splits `pre`, builds the training graph and reorders the raw feature
/// rows (indexed by raw item) into the new item order.
DatasetBundle make_bundle(std::string name, const PreprocessResult& pre,
                          const DenseMatrix& raw_visual, const DenseMatrix& raw_textual,
                          std::uint64_t split_seed);

/// Planted-block data. Users and items are divided into contiguous blocks;
/// the items of a block sit on a ring and each user rates a contiguous window
/// of its own block's ring. Item features are a per-block centroid plus a
/// random linear image of the ring position plus Gaussian noise, so both
/// modalities carry the block and the neighbourhood structure.
struct SyntheticData {
  std::vector<RawInteraction> records;
  DenseMatrix visual;
  DenseMatrix textual;
  std::vector<Index> user_block;
  std::vector<Index> item_block;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

DatasetBundle synthetic_bundle(const SyntheticSpec& spec, std::uint64_t data_seed,
                               std::uint64_t split_seed);

}  // namespace crane
