#pragma once

#include <span>
#include <vector>

#include "crane/dense.hpp"
#include "crane/rng.hpp"
#include "crane/sparse.hpp"

namespace crane {

struct Interaction {
  Index user = 0;
  Index item = 0;
  bool operator==(const Interaction&) const = default;
  auto operator<=>(const Interaction&) const = default;
};

/// Binary user-item graph with the degree and neighbour views used across
/// the model. Degrees always refer to this (unsampled) graph.
struct InteractionGraph {
  CsrMatrix adjacency;    // users x items, values 1
  CsrMatrix adjacency_t;  // items x users
  std::vector<double> user_degrees;
  std::vector<double> item_degrees;
  std::vector<std::vector<Index>> user_neighbors;
  std::vector<std::vector<Index>> item_neighbors;

  Index n_users() const { return adjacency.n_rows; }
  Index n_items() const { return adjacency.n_cols; }
  Index n_edges() const { return adjacency.nnz(); }
};

InteractionGraph build_interaction_graph(std::span<const Interaction> train_pairs, Index n_users,
                                         Index n_items);

/// One DropEdge realisation in the symmetric (M+N) x (M+N) block layout
/// [[0, A~], [A~^T, 0]], normalised with the original degrees.
struct SampledGraph {
  CsrMatrix adjacency_sym;
  std::vector<bool> retained_mask;  // one flag per edge of the source graph, CSR order
  Index n_users = 0;
  Index n_items = 0;

  Index retained_edges() const;
};

/// Edge retention probability 1 / sqrt(d_u * d_i).
double retention_probability(double user_degree, double item_degree);

/// Keeps each edge independently with its retention probability.
SampledGraph dropedge_sample(const InteractionGraph& g, SeededRng& rng);

/// Propagation graph built from an explicit retention mask.
SampledGraph sampled_graph_from_mask(const InteractionGraph& g, std::vector<bool> mask);

/// Every edge retained; used for validation and test passes.
SampledGraph full_propagation_graph(const InteractionGraph& g);

/// Row-normalised top-k item-item graph.
struct SemanticGraph {
  CsrMatrix s_tilde;
  Index k = 0;
  Index source_epoch = 0;
};

SemanticGraph build_semantic_graph(const DenseMatrix& x_att_items, Index k, Index block,
                                   Index epoch = 0, const Parallelism& par = {});

/// Multi-view form (mean of per-view cosines before top-k).
SemanticGraph build_semantic_graph(std::span<const DenseMatrix> views, Index k, Index block,
                                   Index epoch = 0, const Parallelism& par = {});

}  // namespace crane
