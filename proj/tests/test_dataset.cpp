#include <doctest.h>

#include <set>
#include <vector>

#include "crane/dataset.hpp"
#include "toy.hpp"

using namespace crane;
using namespace crane::testing;

namespace {

std::vector<RawInteraction> user_with(Index user, Index count, Index first_item = 0) {
  std::vector<RawInteraction> r;
  for (Index i = 0; i < count; ++i) r.push_back({user, first_item + i, 1.0 + double(i % 5)});
  return r;
}

}  // namespace

TEST_CASE("preprocess drops users below four distinct items") {
  auto raw = user_with(0, 3);
  const auto keep = user_with(1, 4, 2);
  raw.insert(raw.end(), keep.begin(), keep.end());
  const PreprocessResult pre = preprocess(raw);
  CHECK(pre.n_users == 1);
  CHECK(pre.user_origin == std::vector<Index>{1});
  CHECK(pre.n_items == 4);
  CHECK(pre.item_origin == std::vector<Index>{2, 3, 4, 5});
  CHECK(pre.pairs.front() == Interaction{0, 0});

  CHECK_THROWS_AS(preprocess(user_with(0, 3)), std::invalid_argument);
}

TEST_CASE("preprocess binarises ratings and collapses duplicates") {
  std::vector<RawInteraction> raw;
  for (double rating : {1.0, 2.0, 3.0, 4.0, 5.0}) raw.push_back({0, Index(rating), rating});
  raw.push_back({0, 1, 5.0});  // duplicate of (0, 1)
  const PreprocessResult pre = preprocess(raw);
  CHECK(pre.pairs.size() == 5);

  // Three distinct items plus a duplicate is still below the threshold.
  std::vector<RawInteraction> dup{{0, 0, 5}, {0, 1, 5}, {0, 2, 5}, {0, 2, 4}};
  CHECK_THROWS(preprocess(dup));

  std::vector<RawInteraction> bad = user_with(0, 4);
  bad[2].rating = 0.0;
  CHECK_THROWS_WITH_AS(preprocess(bad), doctest::Contains("record 2"), std::invalid_argument);
}

TEST_CASE("split allocation for 4..12 interactions") {
  // n: {train, valid, test} under test = ceil(n/10), valid = floor(n/10).
  const std::vector<std::array<Index, 4>> table{
      {4, 3, 0, 1}, {5, 4, 0, 1},  {6, 5, 0, 1},  {7, 6, 0, 1},  {8, 7, 0, 1},
      {9, 8, 0, 1}, {10, 8, 1, 1}, {11, 8, 1, 2}, {12, 9, 1, 2},
  };
  for (const auto& [n, train, valid, test] : table) {
    INFO("n = " << n);
    const SplitCounts c = split_counts(n);
    CHECK(c.train == train);
    CHECK(c.valid == valid);
    CHECK(c.test == test);
  }
  for (Index n = 1; n < 200; ++n) {
    const SplitCounts c = split_counts(n);
    CHECK(c.train + c.valid + c.test == n);
    CHECK(c.train >= 1);
  }
}

TEST_CASE("split_811 partitions each user's items reproducibly") {
  std::vector<Interaction> pairs;
  for (Index u = 0; u < 12; ++u)
    for (Index t = 0; t < 4 + u; ++t) pairs.push_back({u, (u * 7 + t * 3) % 40});
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  const DataSplit a = split_811(pairs, 12, SplitSpec{9});
  CHECK(a == split_811(pairs, 12, SplitSpec{9}));
  CHECK_FALSE(a == split_811(pairs, 12, SplitSpec{672}));

  std::vector<Interaction> all;
  for (const auto* part : {&a.train, &a.valid, &a.test}) {
    CHECK(std::is_sorted(part->begin(), part->end()));
    all.insert(all.end(), part->begin(), part->end());
  }
  std::sort(all.begin(), all.end());
  CHECK(all == pairs);
  for (Index u = 0; u < 12; ++u) {
    auto count = [u](const std::vector<Interaction>& v) {
      return Index(std::count_if(v.begin(), v.end(), [u](const auto& e) { return e.user == u; }));
    };
    const SplitCounts c = split_counts(count(a.train) + count(a.valid) + count(a.test));
    CHECK(count(a.train) == c.train);
    CHECK(count(a.valid) == c.valid);
    CHECK(count(a.test) == c.test);
  }
}

TEST_CASE("make_bundle reorders feature rows and builds the training graph") {
  std::vector<RawInteraction> raw;
  // Raw items 5, 1, 3, 0 for user 0; raw item 2 is only seen by a dropped user.
  for (Index i : {5, 1, 3, 0}) raw.push_back({0, i, 4.0});
  raw.push_back({1, 2, 4.0});
  const PreprocessResult pre = preprocess(raw);
  DenseMatrix visual(6, 1), textual(6, 2);
  for (Index r = 0; r < 6; ++r) {
    visual(r, 0) = double(r);
    textual(r, 1) = -double(r);
  }
  const DatasetBundle b = make_bundle("tiny", pre, visual, textual, 9);
  CHECK(b.n_items == 4);
  CHECK(b.feats.visual == DenseMatrix::from_rows({{0.0}, {1.0}, {3.0}, {5.0}}));
  CHECK(b.feats.textual(3, 1) == -5.0);
  CHECK(b.graph.n_edges() == b.split.train.size());
  CHECK(b.split.test.size() == 1);
  CHECK(b.test_by_user[0].size() == 1);
}

TEST_CASE("synthetic generator: shape, blocks and determinism") {
  const SyntheticSpec spec;  // 20 users, 30 items, 2 blocks
  const SyntheticData a = generate_synthetic(spec, 5);
  const SyntheticData b = generate_synthetic(spec, 5);
  CHECK(a.visual == b.visual);
  CHECK(a.records.size() == b.records.size());
  CHECK(a.visual.rows() == 30);
  CHECK(a.visual.cols() == spec.visual_dim);
  CHECK(a.textual.cols() == spec.textual_dim);
  CHECK(a.records.size() == 20 * spec.interactions_per_user);
  for (const auto& r : a.records) {
    CHECK(a.user_block[r.user] == a.item_block[r.item]);
    CHECK((r.rating >= 1.0 && r.rating <= 5.0));
  }
  const DatasetBundle bundle = synthetic_bundle(spec, 5, 9);
  CHECK(bundle.n_users == 20);
  CHECK(bundle.name == "synthetic");
}
