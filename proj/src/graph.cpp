#include "crane/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crane/knn.hpp"

namespace crane {

InteractionGraph build_interaction_graph(std::span<const Interaction> train_pairs, Index n_users,
                                         Index n_items) {
  if (train_pairs.empty()) throw std::invalid_argument("interaction graph: no training pairs");
  std::vector<Index> rows;
  std::vector<Index> cols;
  rows.reserve(train_pairs.size());
  cols.reserve(train_pairs.size());
  for (const auto& p : train_pairs) {
    rows.push_back(p.user);
    cols.push_back(p.item);
  }
  InteractionGraph g;
  g.adjacency = csr_pattern(rows, cols, n_users, n_items);
  g.adjacency_t = transpose(g.adjacency);
  g.user_degrees = degree_vector(g.adjacency, Axis::Row);
  g.item_degrees = degree_vector(g.adjacency, Axis::Col);
  g.user_neighbors.resize(n_users);
  for (Index u = 0; u < n_users; ++u) {
    g.user_neighbors[u].assign(g.adjacency.col_indices.begin() + g.adjacency.row_offsets[u],
                               g.adjacency.col_indices.begin() + g.adjacency.row_offsets[u + 1]);
  }
  g.item_neighbors.resize(n_items);
  for (Index i = 0; i < n_items; ++i) {
    g.item_neighbors[i].assign(g.adjacency_t.col_indices.begin() + g.adjacency_t.row_offsets[i],
                               g.adjacency_t.col_indices.begin() + g.adjacency_t.row_offsets[i + 1]);
  }
  return g;
}

Index SampledGraph::retained_edges() const {
  return static_cast<Index>(std::count(retained_mask.begin(), retained_mask.end(), true));
}

double retention_probability(double user_degree, double item_degree) {
  return 1.0 / std::sqrt(user_degree * item_degree);
}

SampledGraph sampled_graph_from_mask(const InteractionGraph& g, std::vector<bool> mask) {
  const CsrMatrix& a = g.adjacency;
  if (mask.size() != a.nnz()) throw std::invalid_argument("retention mask length mismatch");
  const Index m = g.n_users();
  std::vector<Index> rows;
  std::vector<Index> cols;
  std::vector<double> vals;
  for (Index u = 0; u < m; ++u) {
    for (Index p = a.row_offsets[u]; p < a.row_offsets[u + 1]; ++p) {
      if (!mask[p]) continue;
      const Index i = a.col_indices[p];
      const double w = 1.0 / std::sqrt(g.user_degrees[u] * g.item_degrees[i]);
      rows.push_back(u);
      cols.push_back(m + i);
      vals.push_back(w);
      rows.push_back(m + i);
      cols.push_back(u);
      vals.push_back(w);
    }
  }
  SampledGraph s;
  s.n_users = m;
  s.n_items = g.n_items();
  s.adjacency_sym = csr_from_triplets(rows, cols, vals, m + s.n_items, m + s.n_items);
  s.retained_mask = std::move(mask);
  return s;
}

SampledGraph dropedge_sample(const InteractionGraph& g, SeededRng& rng) {
  const CsrMatrix& a = g.adjacency;
  std::vector<bool> mask(a.nnz(), false);
  for (Index u = 0; u < g.n_users(); ++u) {
    for (Index p = a.row_offsets[u]; p < a.row_offsets[u + 1]; ++p) {
      const double keep = retention_probability(g.user_degrees[u], g.item_degrees[a.col_indices[p]]);
      mask[p] = rng.uniform() < keep;
    }
  }
  return sampled_graph_from_mask(g, std::move(mask));
}

SampledGraph full_propagation_graph(const InteractionGraph& g) {
  return sampled_graph_from_mask(g, std::vector<bool>(g.adjacency.nnz(), true));
}

SemanticGraph build_semantic_graph(std::span<const DenseMatrix> views, Index k, Index block,
                                   Index epoch, const Parallelism& par) {
  SemanticGraph sem;
  sem.s_tilde = row_normalize(blocked_similarity_topk(views, k, block, par));
  sem.k = k;
  sem.source_epoch = epoch;
  return sem;
}

SemanticGraph build_semantic_graph(const DenseMatrix& x_att_items, Index k, Index block,
                                   Index epoch, const Parallelism& par) {
  return build_semantic_graph(std::span<const DenseMatrix>(&x_att_items, 1), k, block, epoch,
                              par);
}

}  // namespace crane
