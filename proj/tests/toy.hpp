#pragma once

// Small fixed instances shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crane/graph.hpp"
#include "crane/model.hpp"
#include "crane/params.hpp"
#include "crane/rng.hpp"
#include "crane/training.hpp"

namespace crane::testing {

inline DenseMatrix random_matrix(Index rows, Index cols, SeededRng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// M users, N items; user u rates 3 or 4 items spread over the catalogue.
inline std::vector<Interaction> toy_pairs(Index m, Index n) {
  std::vector<Interaction> pairs;
  for (Index u = 0; u < m; ++u) {
    const Index count = 3 + u % 2;
    for (Index t = 0; t < count; ++t) pairs.push_back({u, (u + 3 * t) % n});
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

struct ToyInstance {
  TrainConfig cfg;
  InteractionGraph graph;
  ModalityFeatures feats;
  SampledGraph propagation;  // frozen DropEdge realisation
  std::vector<ModelStructure> structures;
  ModelParameters params;
  SemanticGraph semantic;  // frozen support
  TripletBatch batch;
  LossWeights weights;

  ForwardInputs inputs() const { return {graph, feats, propagation, &semantic, {}, nullptr}; }
};

/// The gradient-check instance: M=5, N=8, d=4, d_lat=4, R=2, L_ui=2, L_ii=1.
inline ToyInstance make_toy(const TrainConfig& base, std::uint64_t seed = 7) {
  ToyInstance t;
  t.cfg = base;
  SeededRng rng(seed);
  const Index m = 5;
  const Index n = 8;
  const auto pairs = toy_pairs(m, n);
  t.graph = build_interaction_graph(pairs, m, n);
  t.feats.visual = random_matrix(n, 6, rng);
  t.feats.textual = random_matrix(n, 5, rng);
  // Keep every edge except a fixed few so propagation still reaches everyone.
  std::vector<bool> mask(t.graph.n_edges(), true);
  for (Index e = 0; e < mask.size(); e += 4) mask[e] = false;
  t.propagation = sampled_graph_from_mask(t.graph, mask);
  t.structures = structures_for(t.cfg);
  SeededRng init = rng.derive(11);
  t.params = init_params(dims_for(t.cfg, m, n, 6, 5), init);
  if (t.structures.front().needs_semantic_graph()) {
    t.semantic = build_semantic_graph_for(t.params, t.structures.front(), t.graph, t.feats, 0);
  }
  SeededRng batch_rng = rng.derive(12);
  t.batch = sample_triplets(t.graph, 6, batch_rng);
  t.weights = LossWeights{base.beta, base.lambda, base.tau};
  return t;
}

inline TrainConfig toy_config() {
  TrainConfig cfg = default_config("synthetic");
  cfg.d = 4;
  cfg.d_lat = 4;
  cfg.d_joint = 4;
  cfg.R = 2;
  cfg.L_ui = 2;
  cfg.L_ii = 1;
  cfg.k = 3;
  cfg.beta = 0.5;
  cfg.lambda = 0.01;
  cfg.tau = 0.5;
  return cfg;
}

/// Loss of the toy instance at arbitrary parameters (randomness frozen).
inline double toy_loss(const ToyInstance& t, const ModelStructure& s, const ModelParameters& p) {
  ForwardInputs in{t.graph, t.feats, t.propagation,
                   s.needs_semantic_graph() ? &t.semantic : nullptr, {}, nullptr};
  const ForwardTrace trace = forward(p, s, in);
  return total_loss(trace, t.batch, t.weights, p);
}

struct GradCheckResult {
  Index entries = 0;
  Index failures = 0;
  double worst_rel = 0.0;
  std::string worst_name;
};

/// Compares backward_pass with central differences on every entry.
inline GradCheckResult check_gradients(const ToyInstance& t, const ModelStructure& s,
                                       double h = 1e-5, double rel_tol = 1e-4,
                                       double abs_tol = 1e-7) {
  ForwardInputs in{t.graph, t.feats, t.propagation,
                   s.needs_semantic_graph() ? &t.semantic : nullptr, {}, nullptr};
  const ForwardTrace trace = forward(t.params, s, in);
  const GradientSet g = backward_pass(trace, t.batch, t.weights, t.params);
  GradCheckResult r;
  const auto analytic = named_tensors(g);
  const auto tensors = named_tensors(t.params);
  for (Index q = 0; q < tensors.size(); ++q) {
    const auto& [name, tensor] = tensors[q];
    for (Index x = 0; x < tensor->size(); ++x) {
      auto loss_at = [&](double delta) {
        ModelParameters shifted = t.params;
        named_tensors(shifted)[q].second->data()[x] += delta;
        return toy_loss(t, s, shifted);
      };
      const double numeric = finite_diff_grad(loss_at, h);
      const double exact = analytic[q].second->data()[x];
      const double diff = std::abs(numeric - exact);
      const double scale = std::max(std::abs(numeric), std::abs(exact));
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      ++r.entries;
      if (diff > abs_tol && rel > rel_tol) {
        ++r.failures;
        if (rel > r.worst_rel) {
          r.worst_rel = rel;
          r.worst_name = name + "[" + std::to_string(x) + "]";
        }
      }
    }
  }
  return r;
}

}  // namespace crane::testing
