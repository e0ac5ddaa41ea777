#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "crane/config.hpp"
#include "crane/dense.hpp"
#include "crane/graph.hpp"
#include "crane/params.hpp"
#include "crane/rca.hpp"
#include "crane/stage_clock.hpp"

namespace crane {

/// Raw item features, one row per item.
struct ModalityFeatures {
  DenseMatrix visual;
  DenseMatrix textual;

  Index n_items() const { return visual.rows(); }
  /// Throws unless both matrices have n_items rows and positive width.
  void validate(Index n_items) const;
};

/// Where the item-item graph gets its item representations from.
enum class SemanticSource { Rca, Visual, Textual, Concat, Sum, Average };

/// Which representations enter the final z.
enum class FusionMode {
  Joint,          // z = e + h
  Collaborative,  // z = e
  Semantic,       // z = h
};

/// The concrete computation graph of one model branch. Derived from the
/// config; variants are expressed as switches here.
struct ModelStructure {
  Index ui_layers = 2;
  Index ii_layers = 1;
  Index rca_rounds = 3;
  Index k = 15;
  bool attention = true;
  bool item_graph = true;
  bool contrastive = true;
  bool trainable_gcn = false;
  SemanticSource source = SemanticSource::Rca;
  Aggregation aggregation = Aggregation::Sum;
  FusionMode fusion = FusionMode::Joint;
  GcnActivation activation = GcnActivation::None;
  LayerReadout readout = LayerReadout::Mean;
  double leaky_slope = 0.2;
  Index similarity_block = 256;
  Index correlation_block = 256;
  Index correlation_cache_limit = 4096;  // keep whole maps up to this many entities

  bool has_semantic_view() const { return item_graph && fusion != FusionMode::Collaborative; }
  bool needs_semantic_graph() const { return has_semantic_view() && ii_layers > 0; }
  bool uses_rca() const { return needs_semantic_graph() && source == SemanticSource::Rca; }
  bool includes_collaborative() const { return fusion != FusionMode::Semantic; }
};

/// One structure per independently trained branch: one for every variant
/// except wo_dual_fusion, which trains a collaborative and a semantic branch.
std::vector<ModelStructure> structures_for(const TrainConfig& cfg);

struct ProfileTrace {
  Aggregation aggregation = Aggregation::Sum;
  std::vector<Index> argmax;    // max: n_users x d_lat winning item
  std::vector<double> weights;  // attention: softmax weight per adjacency entry
};

struct UiGcnTrace {
  std::vector<DenseMatrix> layers;      // e^{(0..L)}
  std::vector<DenseMatrix> propagated;  // A_hat e^{(l)}, l < L
  std::vector<DenseMatrix> pre;         // pre-activation of e^{(l+1)}
};

struct SemanticTrace {
  std::vector<DenseMatrix> views;  // item representations compared by cosine
  std::vector<std::vector<double>> norms;
  CsrMatrix similarity;  // mean cosine on the retained support
  std::vector<double> row_sums;
  std::vector<bool> fallback;
  CsrMatrix s_tilde;
  CsrMatrix s_tilde_t;
};

/// Everything the backward pass needs. Holds non-owning pointers to the
/// graphs and features of the pass, which must outlive it.
struct ForwardTrace {
  std::uint64_t version = 0;
  ModelStructure structure;
  const InteractionGraph* graph = nullptr;
  const ModalityFeatures* features = nullptr;
  const SampledGraph* propagation = nullptr;
  const SemanticGraph* semantic = nullptr;
  Parallelism par;

  std::array<DenseMatrix, 2> item_modal;  // projected item features
  std::array<ProfileTrace, 2> profiles;
  DenseMatrix x_att;
  RcaTrace rca;
  SemanticTrace sem;
  UiGcnTrace ui;
  std::vector<DenseMatrix> ii_layers;  // h^{(0..L_ii)}
  DenseMatrix e;                       // collaborative readout, (M+N) x d
  DenseMatrix h_users;
  DenseMatrix h_items;
  DenseMatrix z;

  Index n_users() const { return graph->n_users(); }
  Index n_items() const { return graph->n_items(); }
};

struct ForwardInputs {
  const InteractionGraph& graph;
  const ModalityFeatures& features;
  const SampledGraph& propagation;
  const SemanticGraph* semantic = nullptr;  // support of the item graph
  Parallelism par{};
  StageClock* clock = nullptr;
};

// Individual stages. ----------------------------------------------------------

/// Item modality matrices projected to d_lat: raw^m * proj_m.
std::pair<DenseMatrix, DenseMatrix> project_modalities(const ModalityFeatures& feats,
                                                       const ParameterTensors& p);

/// Sum over each user's training items.
DenseMatrix user_modality_profiles(const InteractionGraph& g, const DenseMatrix& item_feats);

/// Profile under any aggregation strategy; `attention` is the 1 x d_lat
/// scoring vector (attention aggregation only).
DenseMatrix aggregate_user_profiles(const InteractionGraph& g, const DenseMatrix& item_feats,
                                    Aggregation aggregation, const DenseMatrix* attention,
                                    ProfileTrace* trace);

/// Collaborative embeddings on the sampled graph. Layer rule
/// e^{(l+1)} = act(A_hat e^{(l)} W^{(l)}); with the defaults act and W are
/// identities. Returns the layer mean (or the last layer).
DenseMatrix ui_gcn_forward(const SampledGraph& sampled, const ParameterTensors& p,
                           const ModelStructure& s, UiGcnTrace& trace, const Parallelism& par = {});

/// h = S~^L e_items.
DenseMatrix ii_gcn_forward(const CsrMatrix& s_tilde, const DenseMatrix& e_items, Index layers,
                           std::vector<DenseMatrix>* trace = nullptr, const Parallelism& par = {});

/// h_u = sum of h_i over the user's training items.
DenseMatrix user_semantic_profiles(const InteractionGraph& g, const DenseMatrix& h_items,
                                   const Parallelism& par = {});

/// z = e + [h_users; h_items].
DenseMatrix fuse(const DenseMatrix& e, const DenseMatrix& h_users, const DenseMatrix& h_items);

/// z_u . z_i with users stacked above items in z.
double score(const DenseMatrix& z, Index n_users, Index user, Index item);

/// Item representations the semantic graph is built from, without recording
/// a trace. Used when (re)building the graph.
std::vector<DenseMatrix> semantic_views(const ParameterTensors& p, const ModelStructure& s,
                                        const InteractionGraph& g, const ModalityFeatures& feats);

/// Builds the semantic graph for the current parameters.
SemanticGraph build_semantic_graph_for(const ParameterTensors& p, const ModelStructure& s,
                                       const InteractionGraph& g, const ModalityFeatures& feats,
                                       Index epoch, const Parallelism& par = {},
                                       StageClock* clock = nullptr);

/// Full forward pass. When the structure needs an item graph, its support is
/// taken from inputs.semantic and its weights are recomputed from the current
/// parameters, so they stay differentiable.
ForwardTrace forward(const ModelParameters& p, const ModelStructure& s, const ForwardInputs& in);

/// Reverse pass from dL/dz plus the extra contrastive gradients on e and the
/// semantic views. Accumulates into g.
struct RepresentationGrads {
  DenseMatrix z;        // (M+N) x d
  DenseMatrix e;        // extra gradient on the collaborative readout
  DenseMatrix h_users;  // extra gradient on h_u
  DenseMatrix h_items;  // extra gradient on h_i
};

void backward_representations(const ForwardTrace& trace, const ParameterTensors& p,
                              RepresentationGrads grads, GradientSet& g, StageClock* clock = nullptr);

}  // namespace crane
