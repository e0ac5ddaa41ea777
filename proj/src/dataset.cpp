#include "crane/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

namespace crane {

PreprocessResult preprocess(std::span<const RawInteraction> raw, Index min_interactions) {
  std::vector<Interaction> pairs;
  pairs.reserve(raw.size());
  for (Index r = 0; r < raw.size(); ++r) {
    const double rating = raw[r].rating;
    if (!(rating >= 1.0 && rating <= 5.0)) {
      throw std::invalid_argument("preprocess: record " + std::to_string(r) + " has rating " +
                                  std::to_string(rating) + " outside [1, 5]");
    }
    pairs.push_back({raw[r].user, raw[r].item});
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::map<Index, Index> user_count;
  for (const auto& p : pairs) ++user_count[p.user];
  std::erase_if(pairs, [&](const Interaction& p) { return user_count[p.user] < min_interactions; });
  if (pairs.empty()) {
    throw std::invalid_argument("preprocess: no user has at least " +
                                std::to_string(min_interactions) + " interactions");
  }

  PreprocessResult out;
  std::map<Index, Index> user_index;
  std::map<Index, Index> item_index;
  for (const auto& p : pairs) {
    user_index.emplace(p.user, 0);
    item_index.emplace(p.item, 0);
  }
  for (auto& [raw_id, idx] : user_index) {
    idx = out.user_origin.size();
    out.user_origin.push_back(raw_id);
  }
  for (auto& [raw_id, idx] : item_index) {
    idx = out.item_origin.size();
    out.item_origin.push_back(raw_id);
  }
  out.n_users = out.user_origin.size();
  out.n_items = out.item_origin.size();
  out.pairs.reserve(pairs.size());
  for (const auto& p : pairs) out.pairs.push_back({user_index[p.user], item_index[p.item]});
  return out;
}

SplitCounts split_counts(Index n) {
  SplitCounts c;
  if (n == 0) return c;
  c.test = std::min((n + 9) / 10, n - 1);
  c.valid = std::min(n / 10, n - 1 - c.test);
  c.train = n - c.test - c.valid;
  return c;
}

DataSplit split_811(std::span<const Interaction> pairs, Index n_users, const SplitSpec& spec) {
  std::vector<std::vector<Index>> items(n_users);
  for (const auto& p : pairs) {
    if (p.user >= n_users) throw std::out_of_range("split_811: user index out of range");
    items[p.user].push_back(p.item);
  }
  SeededRng rng(spec.seed);
  DataSplit out;
  for (Index u = 0; u < n_users; ++u) {
    auto& list = items[u];
    std::sort(list.begin(), list.end());
    shuffle(std::span<Index>(list), rng);
    const SplitCounts c = split_counts(list.size());
    for (Index t = 0; t < list.size(); ++t) {
      auto& dst = t < c.test ? out.test : (t < c.test + c.valid ? out.valid : out.train);
      dst.push_back({u, list[t]});
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::string_view to_string(Phase p) { return p == Phase::Valid ? "valid" : "test"; }

namespace {

std::vector<std::vector<Index>> group_by_user(const std::vector<Interaction>& pairs, Index n_users) {
  std::vector<std::vector<Index>> out(n_users);
  for (const auto& p : pairs) out[p.user].push_back(p.item);
  return out;
}

DenseMatrix reorder_rows(const DenseMatrix& raw, const std::vector<Index>& origin,
                         const char* which) {
  DenseMatrix out(origin.size(), raw.cols());
  for (Index i = 0; i < origin.size(); ++i) {
    if (origin[i] >= raw.rows()) {
      throw std::invalid_argument(std::string(which) + " features: item " +
                                  std::to_string(origin[i]) + " has no feature row (matrix has " +
                                  std::to_string(raw.rows()) + " rows)");
    }
    std::copy(raw.row(origin[i]).begin(), raw.row(origin[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

DatasetBundle make_bundle(std::string name, const PreprocessResult& pre,
                          const DenseMatrix& raw_visual, const DenseMatrix& raw_textual,
                          std::uint64_t split_seed) {
  DatasetBundle b;
  b.name = std::move(name);
  b.split_seed = split_seed;
  b.n_users = pre.n_users;
  b.n_items = pre.n_items;
  b.split = split_811(pre.pairs, pre.n_users, SplitSpec{split_seed});
  b.graph = build_interaction_graph(b.split.train, b.n_users, b.n_items);
  b.feats.visual = reorder_rows(raw_visual, pre.item_origin, "visual");
  b.feats.textual = reorder_rows(raw_textual, pre.item_origin, "textual");
  b.feats.validate(b.n_items);
  b.valid_by_user = group_by_user(b.split.valid, b.n_users);
  b.test_by_user = group_by_user(b.split.test, b.n_users);
  return b;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.blocks == 0 || spec.users < spec.blocks || spec.items < spec.blocks) {
    throw std::invalid_argument("synthetic: need at least one user and item per block");
  }
  SyntheticData out;
  SeededRng rng(seed);
  auto block_of = [&](Index idx, Index total) { return idx * spec.blocks / total; };
  out.user_block.resize(spec.users);
  out.item_block.resize(spec.items);
  std::vector<std::vector<Index>> block_items(spec.blocks);
  std::vector<double> angle(spec.items);
  for (Index i = 0; i < spec.items; ++i) {
    out.item_block[i] = block_of(i, spec.items);
    block_items[out.item_block[i]].push_back(i);
  }
  for (const auto& ring : block_items) {
    for (Index r = 0; r < ring.size(); ++r) {
      angle[ring[r]] = 2.0 * std::numbers::pi * static_cast<double>(r) /
                       static_cast<double>(ring.size());
    }
  }

  // Each user rates a contiguous window of its block's ring of items.
  for (Index u = 0; u < spec.users; ++u) {
    out.user_block[u] = block_of(u, spec.users);
    const auto& ring = block_items[out.user_block[u]];
    if (ring.size() < spec.interactions_per_user) {
      throw std::invalid_argument("synthetic: interactions_per_user exceeds items per block");
    }
    const Index start = rng.uniform_index(ring.size());
    std::vector<Index> window;
    for (Index t = 0; t < spec.interactions_per_user; ++t) {
      window.push_back(ring[(start + t) % ring.size()]);
    }
    std::sort(window.begin(), window.end());
    for (Index i : window) {
      out.records.push_back({u, i, static_cast<double>(1 + rng.uniform_index(5))});
    }
  }

  // Features: block centroid + a random linear image of the ring position + noise.
  auto features = [&](Index dim) {
    DenseMatrix centroids(spec.blocks, dim);
    for (double& v : centroids.data()) v = rng.normal();
    DenseMatrix basis(2, dim);
    for (double& v : basis.data()) v = rng.normal();
    DenseMatrix x(spec.items, dim);
    for (Index i = 0; i < spec.items; ++i) {
      const auto c = centroids.row(out.item_block[i]);
      const double ca = std::cos(angle[i]);
      const double sa = std::sin(angle[i]);
      auto row = x.row(i);
      for (Index j = 0; j < dim; ++j) {
        row[j] = c[j] + ca * basis(0, j) + sa * basis(1, j) + spec.noise * rng.normal();
      }
    }
    return x;
  };
  out.visual = features(spec.visual_dim);
  out.textual = features(spec.textual_dim);
  return out;
}

DatasetBundle synthetic_bundle(const SyntheticSpec& spec, std::uint64_t data_seed,
                               std::uint64_t split_seed) {
  const SyntheticData data = generate_synthetic(spec, data_seed);
  const PreprocessResult pre = preprocess(data.records);
  return make_bundle("synthetic", pre, data.visual, data.textual, split_seed);
}

}  // namespace crane
