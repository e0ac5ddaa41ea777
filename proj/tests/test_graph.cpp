#include <doctest.h>

#include <cmath>
#include <vector>

#include "crane/graph.hpp"
#include "crane/knn.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace crane;
using namespace crane::testing;

TEST_CASE("build_interaction_graph: singleton and complete bipartite") {
  const std::vector<Interaction> one{{0, 0}};
  const InteractionGraph g1 = build_interaction_graph(one, 1, 1);
  CHECK(to_dense(g1.adjacency) == DenseMatrix::from_rows({{1.0}}));
  CHECK(g1.user_degrees == std::vector<double>{1.0});
  CHECK(g1.item_degrees == std::vector<double>{1.0});

  std::vector<Interaction> full;
  for (Index u = 0; u < 3; ++u)
    for (Index i = 0; i < 2; ++i) full.push_back({u, i});
  const InteractionGraph g = build_interaction_graph(full, 3, 2);
  CHECK(g.user_degrees == std::vector<double>{2.0, 2.0, 2.0});
  CHECK(g.item_degrees == std::vector<double>{3.0, 3.0});
  CHECK(to_dense(g.adjacency_t) == transpose(to_dense(g.adjacency)));
  CHECK(g.item_neighbors[1] == std::vector<Index>{0, 1, 2});
}

TEST_CASE("retention probability") {
  CHECK(retention_probability(1.0, 1.0) == 1.0);
  CHECK(retention_probability(4.0, 9.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("edges with unit degrees are always retained") {
  const std::vector<Interaction> pairs{{0, 0}, {1, 1}};
  const InteractionGraph g = build_interaction_graph(pairs, 2, 2);
  SeededRng rng(1);
  for (int t = 0; t < 100; ++t) CHECK(dropedge_sample(g, rng).retained_edges() == 2);
}

TEST_CASE("DropEdge retention frequency for P = 1/4") {
  // User 0 and item 0 both have degree 4.
  std::vector<Interaction> pairs;
  for (Index i = 0; i < 4; ++i) pairs.push_back({0, i});
  for (Index u = 1; u < 4; ++u) pairs.push_back({u, 0});
  std::sort(pairs.begin(), pairs.end());
  const InteractionGraph g = build_interaction_graph(pairs, 4, 4);
  CHECK(g.user_degrees[0] == 4.0);
  CHECK(g.item_degrees[0] == 4.0);
  SeededRng rng(2023);
  int kept = 0;
  const int samples = 10000;
  for (int t = 0; t < samples; ++t) kept += dropedge_sample(g, rng).retained_mask[0] ? 1 : 0;
  CHECK(std::abs(kept / double(samples) - 0.25) <= 0.02);
}

TEST_CASE("sampled graph is symmetric, normalised with the original degrees") {
  const auto pairs = toy_pairs(5, 8);
  const InteractionGraph g = build_interaction_graph(pairs, 5, 8);
  std::vector<bool> mask(g.n_edges(), true);
  mask[1] = false;
  const SampledGraph s = sampled_graph_from_mask(g, mask);
  const DenseMatrix a = to_dense(s.adjacency_sym);
  CHECK(a == transpose(a));
  CHECK(s.retained_edges() == g.n_edges() - 1);
  const DenseMatrix r = to_dense(g.adjacency);
  for (Index u = 0; u < 5; ++u)
    for (Index i = 0; i < 8; ++i) {
      const Index p = [&] {
        for (Index q = g.adjacency.row_offsets[u]; q < g.adjacency.row_offsets[u + 1]; ++q)
          if (g.adjacency.col_indices[q] == i) return q;
        return Index(-1);
      }();
      const bool kept = p != Index(-1) && mask[p];
      const double want = kept ? r(u, i) / std::sqrt(g.user_degrees[u] * g.item_degrees[i]) : 0.0;
      CHECK(a(u, 5 + i) == doctest::Approx(want).epsilon(1e-15));
    }
  CHECK_THROWS_AS(sampled_graph_from_mask(g, std::vector<bool>(3, true)), std::invalid_argument);
}

TEST_CASE("kNN: parallel and orthogonal rows") {
  const DenseMatrix same = DenseMatrix::from_rows({{1.0, 2.0}, {1.0, 2.0}});
  const CsrMatrix s = blocked_cosine_topk(same, 1, 256);
  CHECK(s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));

  const DenseMatrix ortho = DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  const CsrMatrix o = blocked_cosine_topk(ortho, 1, 256);
  CHECK(o.nnz() == 2);
  CHECK(o.col_indices == std::vector<Index>{1, 0});
  CHECK(o.values == std::vector<double>{0.0, 0.0});
}

TEST_CASE("kNN neighbour sets match a brute-force sort for N = 200, k = 15") {
  SeededRng rng(15);
  const DenseMatrix x = random_matrix(200, 12, rng);
  const CsrMatrix s = blocked_cosine_topk(x, 15, 37);
  s.validate();
  const auto want = support_sets(brute_force_semantic(x, 15));
  for (Index i = 0; i < 200; ++i) {
    std::set<Index> got(s.col_indices.begin() + s.row_offsets[i],
                        s.col_indices.begin() + s.row_offsets[i + 1]);
    CHECK(got == want[i]);
  }
}

TEST_CASE("kNN results do not depend on the block size or thread count") {
  SeededRng rng(16);
  const DenseMatrix x = random_matrix(60, 5, rng);
  const CsrMatrix ref = blocked_cosine_topk(x, 7, 256);
  for (Index block : {1, 7, 60}) CHECK(to_dense(blocked_cosine_topk(x, 7, block)) == to_dense(ref));
  CHECK(to_dense(blocked_cosine_topk(x, 7, 5, Parallelism{false, 4})) == to_dense(ref));
}

TEST_CASE("semantic graph over identical rows is uniform") {
  const DenseMatrix x = DenseMatrix::from_rows({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
  const SemanticGraph g = build_semantic_graph(x, 2, 256);
  const DenseMatrix d = to_dense(g.s_tilde);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(d(i, j) == doctest::Approx(i == j ? 0.0 : 0.5).epsilon(1e-15));
}

TEST_CASE("semantic graph equals the composed dense oracle") {
  SeededRng rng(100);
  const DenseMatrix x = random_matrix(100, 8, rng);
  const SemanticGraph g = build_semantic_graph(x, 10, 32, 4);
  CHECK(g.k == 10);
  CHECK(g.source_epoch == 4);
  CHECK(max_abs_diff(to_dense(g.s_tilde), brute_force_semantic(x, 10)) < 1e-10);

  // Averaged views, as used by graph-level late fusion.
  const std::vector<DenseMatrix> views{random_matrix(40, 4, rng), random_matrix(40, 6, rng)};
  const SemanticGraph avg = build_semantic_graph(std::span<const DenseMatrix>(views), 5, 16);
  CHECK(max_abs_diff(to_dense(avg.s_tilde), brute_force_semantic(views, 5)) < 1e-10);
}

TEST_CASE("semantic rows sum to one") {
  SeededRng rng(101);
  const DenseMatrix x = random_matrix(30, 3, rng);
  const SemanticGraph g = build_semantic_graph(x, 4, 256);
  for (Index i = 0; i < 30; ++i) {
    double s = 0.0;
    for (Index p = g.s_tilde.row_offsets[i]; p < g.s_tilde.row_offsets[i + 1]; ++p)
      s += g.s_tilde.values[p];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}
