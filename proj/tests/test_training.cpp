#include <doctest.h>

#include <cmath>

#include "toy.hpp"

using namespace crane;
using namespace crane::testing;

TEST_CASE("backward pass matches central differences on the default model") {
  const ToyInstance t = make_toy(toy_config());
  const auto r = check_gradients(t, t.structures.front());
  INFO("worst " << r.worst_name << " rel " << r.worst_rel);
  CHECK(r.entries > 200);
  CHECK(r.failures == 0);
}

TEST_CASE("RCA and projector weights receive task gradients") {
  const ToyInstance t = make_toy(toy_config());
  const ForwardTrace trace = forward(t.params, t.structures.front(), t.inputs());
  const GradientSet g = backward_pass(trace, t.batch, LossWeights{t.weights.beta, 0.0, t.weights.tau},
                                      t.params);
  for (const auto& [name, tensor] : named_tensors(g)) {
    if (name == "id_emb") continue;
    INFO(name);
    double norm = 0.0;
    for (double v : tensor->data()) norm += v * v;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("backward pass matches central differences for every variant") {
  for (Variant v : {Variant::WoItemGraph, Variant::WoRca, Variant::WoAttention, Variant::WoGcn,
                    Variant::WoCl, Variant::WoDualFusion, Variant::CraneV, Variant::CraneT,
                    Variant::CraneC, Variant::CraneS, Variant::CraneA}) {
    TrainConfig cfg = toy_config();
    cfg.variant = v;
    const ToyInstance t = make_toy(cfg);
    for (const auto& s : t.structures) {
      ToyInstance branch = t;
      if (s.needs_semantic_graph()) {
        branch.semantic = build_semantic_graph_for(t.params, s, t.graph, t.feats, 0);
      }
      const auto r = check_gradients(branch, s);
      INFO(to_string(v) << " worst " << r.worst_name << " rel " << r.worst_rel);
      CHECK(r.failures == 0);
    }
  }
}

TEST_CASE("backward pass matches central differences for every aggregation") {
  for (Aggregation a : {Aggregation::Mean, Aggregation::Max, Aggregation::Attention}) {
    TrainConfig cfg = toy_config();
    cfg.aggregation = a;
    const ToyInstance t = make_toy(cfg);
    const auto r = check_gradients(t, t.structures.front());
    INFO(to_string(a) << " worst " << r.worst_name << " rel " << r.worst_rel);
    CHECK(r.failures == 0);
  }
}

TEST_CASE("backward pass matches central differences with trainable leaky GCN layers") {
  TrainConfig cfg = toy_config();
  cfg.trainable_gcn = true;
  cfg.gcn_activation = GcnActivation::LeakyRelu;
  for (LayerReadout readout : {LayerReadout::Mean, LayerReadout::Last}) {
    cfg.layer_readout = readout;
    const ToyInstance t = make_toy(cfg);
    const auto r = check_gradients(t, t.structures.front());
    INFO(to_string(readout) << " worst " << r.worst_name << " rel " << r.worst_rel);
    CHECK(r.failures == 0);
  }
}

TEST_CASE("backward pass matches central differences with recomputed correlation blocks") {
  TrainConfig cfg = toy_config();
  cfg.correlation_block = 3;
  ToyInstance t = make_toy(cfg);
  ModelStructure s = t.structures.front();
  s.correlation_cache_limit = 0;
  const ForwardTrace trace = forward(t.params, s, t.inputs());
  CHECK_FALSE(trace.rca.correlations_cached);
  // Blocks of 3 rows over 13 entities exercise the ragged last block.
  const auto r = check_gradients(t, s);
  CHECK(r.failures == 0);
}
