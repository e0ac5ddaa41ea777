#include "crane/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "crane/knn.hpp"

namespace crane {

namespace {

constexpr Index kNoItem = std::numeric_limits<Index>::max();

DenseMatrix leaky_relu(const DenseMatrix& x, double slope) {
  DenseMatrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
  return out;
}

void add_block(DenseMatrix& dst, Index row0, const DenseMatrix& src) {
  for (Index i = 0; i < src.rows(); ++i) {
    auto d = dst.row(row0 + i);
    const auto s = src.row(i);
    for (Index j = 0; j < s.size(); ++j) d[j] += s[j];
  }
}

std::vector<DenseMatrix> views_from(const ModelStructure& s, const std::array<DenseMatrix, 2>& modal,
                                    const DenseMatrix& x_att, Index n_users) {
  switch (s.source) {
    case SemanticSource::Rca:
      return {slice_rows(x_att, n_users, x_att.rows())};
    case SemanticSource::Visual:
      return {modal[kVisual]};
    case SemanticSource::Textual:
      return {modal[kTextual]};
    case SemanticSource::Concat:
      return {hconcat(modal[kVisual], modal[kTextual])};
    case SemanticSource::Sum:
      return {add(modal[kVisual], modal[kTextual])};
    case SemanticSource::Average:
      return {modal[kVisual], modal[kTextual]};
  }
  return {};
}

// Projection, profiles and RCA; fills the trace when given one.
std::vector<DenseMatrix> compute_views(const ParameterTensors& p, const ModelStructure& s,
                                       const InteractionGraph& g, const ModalityFeatures& feats,
                                       ForwardTrace* trace, StageClock* clock) {
  auto [xv, xt] = project_modalities(feats, p);
  std::array<DenseMatrix, 2> modal{std::move(xv), std::move(xt)};
  DenseMatrix x_att;
  if (s.source == SemanticSource::Rca) {
    ScopedStage timer(clock, Stage::Rca);
    std::array<DenseMatrix, 2> x0;
    for (std::size_t m = 0; m < 2; ++m) {
      const DenseMatrix* att = p.modal[m].attention.empty() ? nullptr : &p.modal[m].attention;
      ProfileTrace* pt = trace != nullptr ? &trace->profiles[m] : nullptr;
      x0[m] = vconcat(aggregate_user_profiles(g, modal[m], s.aggregation, att, pt), modal[m]);
    }
    RcaOptions opt;
    opt.block = s.correlation_block;
    opt.attention = s.attention;
    opt.cache_limit = s.correlation_cache_limit;
    opt.record = trace != nullptr;
    RcaTrace scratch;
    RcaTrace& rt = trace != nullptr ? trace->rca : scratch;
    x_att = rca_forward(x0[kVisual], x0[kTextual], p, s.rca_rounds, rt, opt);
  }
  auto views = views_from(s, modal, x_att, g.n_users());
  if (trace != nullptr) {
    trace->item_modal = std::move(modal);
    trace->x_att = std::move(x_att);
  }
  return views;
}

// Mean-cosine weights on the fixed support, then row normalisation. Same
// arithmetic as blocked_similarity_topk + row_normalize.
void compute_semantic_weights(SemanticTrace& st, const CsrMatrix& support) {
  st.norms.clear();
  for (const auto& v : st.views) st.norms.push_back(row_norms(v));
  const double inv_views = 1.0 / static_cast<double>(st.views.size());
  st.similarity = support;
  st.s_tilde = support;
  st.row_sums.assign(support.n_rows, 0.0);
  st.fallback.assign(support.n_rows, false);
  for (Index i = 0; i < support.n_rows; ++i) {
    const Index begin = support.row_offsets[i];
    const Index end = support.row_offsets[i + 1];
    double sum = 0.0;
    for (Index q = begin; q < end; ++q) {
      const Index j = support.col_indices[q];
      double acc = 0.0;
      for (Index v = 0; v < st.views.size(); ++v) {
        acc += cosine(st.views[v].row(i), st.norms[v][i], st.views[v].row(j), st.norms[v][j]);
      }
      st.similarity.values[q] = acc * inv_views;
      sum += st.similarity.values[q];
    }
    st.row_sums[i] = sum;
    if (begin == end) continue;
    if (sum <= kRowSumFloor) {
      st.fallback[i] = true;
      const double uniform = 1.0 / static_cast<double>(end - begin);
      for (Index q = begin; q < end; ++q) st.s_tilde.values[q] = uniform;
    } else {
      for (Index q = begin; q < end; ++q) st.s_tilde.values[q] = st.similarity.values[q] / sum;
    }
  }
  st.s_tilde_t = transpose(st.s_tilde);
}

std::vector<DenseMatrix> semantic_weights_backward(const SemanticTrace& st,
                                                   const std::vector<double>& d_s_tilde) {
  std::vector<DenseMatrix> d_views;
  for (const auto& v : st.views) d_views.emplace_back(v.rows(), v.cols());
  const double inv_views = 1.0 / static_cast<double>(st.views.size());
  const CsrMatrix& s = st.s_tilde;
  for (Index i = 0; i < s.n_rows; ++i) {
    if (st.fallback[i]) continue;
    const Index begin = s.row_offsets[i];
    const Index end = s.row_offsets[i + 1];
    double weighted = 0.0;
    for (Index q = begin; q < end; ++q) weighted += d_s_tilde[q] * s.values[q];
    for (Index q = begin; q < end; ++q) {
      const double d_sim = (d_s_tilde[q] - weighted) / st.row_sums[i];
      const double d_cos = d_sim * inv_views;
      if (d_cos == 0.0) continue;
      const Index j = s.col_indices[q];
      for (Index v = 0; v < st.views.size(); ++v) {
        const DenseMatrix& x = st.views[v];
        const double ni = st.norms[v][i];
        const double nj = st.norms[v][j];
        const double c = cosine(x.row(i), ni, x.row(j), nj);
        add_cosine_grad(x.row(i), ni, x.row(j), nj, c, d_cos, d_views[v].row(i));
        add_cosine_grad(x.row(j), nj, x.row(i), ni, c, d_cos, d_views[v].row(j));
      }
    }
  }
  return d_views;
}

DenseMatrix profile_backward(const InteractionGraph& g, const DenseMatrix& item_feats,
                             const ProfileTrace& pt, const DenseMatrix& d_users,
                             const DenseMatrix* attention, DenseMatrix* d_attention) {
  switch (pt.aggregation) {
    case Aggregation::Sum:
      return spmm(g.adjacency_t, d_users);
    case Aggregation::Mean: {
      DenseMatrix scaled_users = d_users;
      for (Index u = 0; u < g.n_users(); ++u) {
        const double deg = g.user_degrees[u];
        if (deg > 0.0)
          for (double& v : scaled_users.row(u)) v /= deg;
      }
      return spmm(g.adjacency_t, scaled_users);
    }
    case Aggregation::Max: {
      DenseMatrix d_items(item_feats.rows(), item_feats.cols());
      const Index dl = item_feats.cols();
      for (Index u = 0; u < g.n_users(); ++u)
        for (Index c = 0; c < dl; ++c) {
          const Index i = pt.argmax[u * dl + c];
          if (i != kNoItem) d_items(i, c) += d_users(u, c);
        }
      return d_items;
    }
    case Aggregation::Attention: {
      DenseMatrix d_items(item_feats.rows(), item_feats.cols());
      const CsrMatrix& a = g.adjacency;
      const auto att = attention->row(0);
      for (Index u = 0; u < g.n_users(); ++u) {
        const Index begin = a.row_offsets[u];
        const Index end = a.row_offsets[u + 1];
        const auto du = d_users.row(u);
        double mean_dalpha = 0.0;
        std::vector<double> d_alpha(end - begin);
        for (Index q = begin; q < end; ++q) {
          d_alpha[q - begin] = dot(du, item_feats.row(a.col_indices[q]));
          mean_dalpha += pt.weights[q] * d_alpha[q - begin];
        }
        for (Index q = begin; q < end; ++q) {
          const Index i = a.col_indices[q];
          const double alpha = pt.weights[q];
          const double d_score = alpha * (d_alpha[q - begin] - mean_dalpha);
          auto di = d_items.row(i);
          const auto xi = item_feats.row(i);
          auto da = d_attention->row(0);
          for (Index c = 0; c < di.size(); ++c) {
            di[c] += alpha * du[c] + d_score * att[c];
            da[c] += d_score * xi[c];
          }
        }
      }
      return d_items;
    }
  }
  return {};
}

}  // namespace

void ModalityFeatures::validate(Index n_items) const {
  if (visual.rows() != n_items || textual.rows() != n_items) {
    throw std::invalid_argument("modality features: expected " + std::to_string(n_items) +
                                " rows, got visual " + std::to_string(visual.rows()) +
                                " and textual " + std::to_string(textual.rows()));
  }
  if (visual.cols() == 0 || textual.cols() == 0) {
    throw std::invalid_argument("modality features: zero feature width");
  }
}

std::vector<ModelStructure> structures_for(const TrainConfig& cfg) {
  ModelStructure s;
  s.ui_layers = cfg.L_ui;
  s.ii_layers = cfg.L_ii;
  s.rca_rounds = cfg.R;
  s.k = cfg.k;
  s.trainable_gcn = cfg.trainable_gcn;
  s.activation = cfg.gcn_activation;
  s.readout = cfg.layer_readout;
  s.aggregation = cfg.aggregation;
  s.similarity_block = cfg.similarity_block;
  s.correlation_block = cfg.correlation_block;

  switch (cfg.variant) {
    case Variant::Full:
      break;
    case Variant::WoItemGraph:
      s.item_graph = false;
      break;
    case Variant::WoRca:
      s.rca_rounds = 1;
      break;
    case Variant::WoAttention:
      s.attention = false;
      break;
    case Variant::WoGcn:
      s.ui_layers = 0;
      s.ii_layers = 0;
      break;
    case Variant::WoCl:
      s.contrastive = false;
      break;
    case Variant::WoDualFusion: {
      ModelStructure collab = s;
      collab.fusion = FusionMode::Collaborative;
      collab.contrastive = false;
      ModelStructure semantic = s;
      semantic.fusion = FusionMode::Semantic;
      semantic.ui_layers = 0;
      semantic.contrastive = false;
      return {collab, semantic};
    }
    case Variant::CraneV:
      s.source = SemanticSource::Visual;
      break;
    case Variant::CraneT:
      s.source = SemanticSource::Textual;
      break;
    case Variant::CraneC:
      s.source = SemanticSource::Concat;
      break;
    case Variant::CraneS:
      s.source = SemanticSource::Sum;
      break;
    case Variant::CraneA:
      s.source = SemanticSource::Average;
      break;
  }
  return {s};
}

std::pair<DenseMatrix, DenseMatrix> project_modalities(const ModalityFeatures& feats,
                                                       const ParameterTensors& p) {
  if (feats.visual.cols() != p.proj_v.rows() || feats.textual.cols() != p.proj_t.rows()) {
    throw std::invalid_argument("project_modalities: feature width does not match projector");
  }
  return {matmul(feats.visual, p.proj_v), matmul(feats.textual, p.proj_t)};
}

DenseMatrix user_modality_profiles(const InteractionGraph& g, const DenseMatrix& item_feats) {
  return aggregate_user_profiles(g, item_feats, Aggregation::Sum, nullptr, nullptr);
}

DenseMatrix aggregate_user_profiles(const InteractionGraph& g, const DenseMatrix& item_feats,
                                    Aggregation aggregation, const DenseMatrix* attention,
                                    ProfileTrace* trace) {
  if (item_feats.rows() != g.n_items()) {
    throw std::invalid_argument("user profiles: item feature rows do not match item count");
  }
  if (trace != nullptr) {
    trace->aggregation = aggregation;
    trace->argmax.clear();
    trace->weights.clear();
  }
  const Index dl = item_feats.cols();
  switch (aggregation) {
    case Aggregation::Sum:
      return spmm(g.adjacency, item_feats);
    case Aggregation::Mean: {
      DenseMatrix out = spmm(g.adjacency, item_feats);
      for (Index u = 0; u < g.n_users(); ++u) {
        const double deg = g.user_degrees[u];
        if (deg > 0.0)
          for (double& v : out.row(u)) v /= deg;
      }
      return out;
    }
    case Aggregation::Max: {
      DenseMatrix out(g.n_users(), dl);
      std::vector<Index> argmax(g.n_users() * dl, kNoItem);
      for (Index u = 0; u < g.n_users(); ++u) {
        for (Index i : g.user_neighbors[u]) {
          const auto x = item_feats.row(i);
          for (Index c = 0; c < dl; ++c) {
            Index& best = argmax[u * dl + c];
            if (best == kNoItem || x[c] > out(u, c)) {
              best = i;
              out(u, c) = x[c];
            }
          }
        }
      }
      if (trace != nullptr) trace->argmax = std::move(argmax);
      return out;
    }
    case Aggregation::Attention: {
      if (attention == nullptr || attention->cols() != dl) {
        throw std::invalid_argument("attention aggregation needs a 1 x d_lat scoring vector");
      }
      const CsrMatrix& a = g.adjacency;
      std::vector<double> weights(a.nnz());
      DenseMatrix out(g.n_users(), dl);
      for (Index u = 0; u < g.n_users(); ++u) {
        const Index begin = a.row_offsets[u];
        const Index end = a.row_offsets[u + 1];
        if (begin == end) continue;
        double top = -std::numeric_limits<double>::infinity();
        for (Index q = begin; q < end; ++q) {
          weights[q] = dot(item_feats.row(a.col_indices[q]), attention->row(0));
          top = std::max(top, weights[q]);
        }
        double total = 0.0;
        for (Index q = begin; q < end; ++q) {
          weights[q] = std::exp(weights[q] - top);
          total += weights[q];
        }
        auto row = out.row(u);
        for (Index q = begin; q < end; ++q) {
          weights[q] /= total;
          const auto x = item_feats.row(a.col_indices[q]);
          for (Index c = 0; c < dl; ++c) row[c] += weights[q] * x[c];
        }
      }
      if (trace != nullptr) trace->weights = std::move(weights);
      return out;
    }
  }
  return {};
}

DenseMatrix ui_gcn_forward(const SampledGraph& sampled, const ParameterTensors& p,
                           const ModelStructure& s, UiGcnTrace& trace, const Parallelism& par) {
  if (s.trainable_gcn && p.w_gcn.size() < s.ui_layers) {
    throw std::invalid_argument("ui_gcn_forward: missing trainable layer weights");
  }
  trace.layers.clear();
  trace.propagated.clear();
  trace.pre.clear();
  trace.layers.push_back(p.id_emb);
  for (Index l = 0; l < s.ui_layers; ++l) {
    DenseMatrix prop = spmm(sampled.adjacency_sym, trace.layers.back(), par);
    DenseMatrix pre = s.trainable_gcn ? matmul(prop, p.w_gcn[l]) : prop;
    DenseMatrix out =
        s.activation == GcnActivation::LeakyRelu ? leaky_relu(pre, s.leaky_slope) : pre;
    if (s.trainable_gcn) trace.propagated.push_back(std::move(prop));
    if (s.activation != GcnActivation::None) trace.pre.push_back(std::move(pre));
    trace.layers.push_back(std::move(out));
  }
  if (s.readout == LayerReadout::Last) return trace.layers.back();
  DenseMatrix e = trace.layers.front();
  for (Index l = 1; l < trace.layers.size(); ++l) axpy(e, trace.layers[l]);
  const double inv = 1.0 / static_cast<double>(trace.layers.size());
  for (double& v : e.data()) v *= inv;
  return e;
}

DenseMatrix ii_gcn_forward(const CsrMatrix& s_tilde, const DenseMatrix& e_items, Index layers,
                           std::vector<DenseMatrix>* trace, const Parallelism& par) {
  DenseMatrix h = e_items;
  if (trace != nullptr) {
    trace->clear();
    trace->push_back(h);
  }
  for (Index l = 0; l < layers; ++l) {
    h = spmm(s_tilde, h, par);
    if (trace != nullptr) trace->push_back(h);
  }
  return h;
}

DenseMatrix user_semantic_profiles(const InteractionGraph& g, const DenseMatrix& h_items,
                                   const Parallelism& par) {
  return spmm(g.adjacency, h_items, par);
}

DenseMatrix fuse(const DenseMatrix& e, const DenseMatrix& h_users, const DenseMatrix& h_items) {
  if (h_users.cols() != e.cols() || h_items.cols() != e.cols() ||
      h_users.rows() + h_items.rows() != e.rows()) {
    throw std::invalid_argument("fuse: shape mismatch");
  }
  return add(e, vconcat(h_users, h_items));
}

double score(const DenseMatrix& z, Index n_users, Index user, Index item) {
  return dot(z.row(user), z.row(n_users + item));
}

std::vector<DenseMatrix> semantic_views(const ParameterTensors& p, const ModelStructure& s,
                                        const InteractionGraph& g, const ModalityFeatures& feats) {
  return compute_views(p, s, g, feats, nullptr, nullptr);
}

SemanticGraph build_semantic_graph_for(const ParameterTensors& p, const ModelStructure& s,
                                       const InteractionGraph& g, const ModalityFeatures& feats,
                                       Index epoch, const Parallelism& par, StageClock* clock) {
  if (!s.needs_semantic_graph()) {
    throw std::logic_error("build_semantic_graph_for: structure has no item graph");
  }
  const auto views = compute_views(p, s, g, feats, nullptr, clock);
  ScopedStage timer(clock, Stage::Similarity);
  return build_semantic_graph(views, s.k, s.similarity_block, epoch, par);
}

ForwardTrace forward(const ModelParameters& p, const ModelStructure& s, const ForwardInputs& in) {
  ForwardTrace t;
  t.version = p.version;
  t.structure = s;
  t.graph = &in.graph;
  t.features = &in.features;
  t.propagation = &in.propagation;
  t.semantic = in.semantic;
  t.par = in.par;
  const Index m = in.graph.n_users();
  const Index n = in.graph.n_items();
  if (p.id_emb.rows() != m + n) {
    throw std::invalid_argument("forward: embedding table does not match graph size");
  }

  {
    ScopedStage timer(in.clock, Stage::Sparse);
    t.e = ui_gcn_forward(in.propagation, p, s, t.ui, in.par);
  }
  const Index d = t.e.cols();
  if (s.has_semantic_view()) {
    const DenseMatrix e_items = slice_rows(t.e, m, m + n);
    if (s.needs_semantic_graph()) {
      if (in.semantic == nullptr || in.semantic->s_tilde.n_rows != n) {
        throw std::invalid_argument("forward: structure needs a semantic graph over the items");
      }
      t.sem.views = compute_views(p, s, in.graph, in.features, &t, in.clock);
      {
        ScopedStage timer(in.clock, Stage::Similarity);
        compute_semantic_weights(t.sem, in.semantic->s_tilde);
      }
      ScopedStage timer(in.clock, Stage::Sparse);
      t.h_items = ii_gcn_forward(t.sem.s_tilde, e_items, s.ii_layers, &t.ii_layers, in.par);
    } else {
      t.h_items = e_items;
      t.ii_layers = {e_items};
    }
    ScopedStage timer(in.clock, Stage::Sparse);
    t.h_users = user_semantic_profiles(in.graph, t.h_items, in.par);
  } else {
    t.h_users = DenseMatrix(m, d);
    t.h_items = DenseMatrix(n, d);
  }

  switch (s.fusion) {
    case FusionMode::Joint:
      t.z = fuse(t.e, t.h_users, t.h_items);
      break;
    case FusionMode::Collaborative:
      t.z = t.e;
      break;
    case FusionMode::Semantic:
      t.z = vconcat(t.h_users, t.h_items);
      break;
  }
  return t;
}

void backward_representations(const ForwardTrace& t, const ParameterTensors& p,
                              RepresentationGrads grads, GradientSet& g, StageClock* clock) {
  const ModelStructure& s = t.structure;
  const InteractionGraph& graph = *t.graph;
  const Index m = graph.n_users();
  const Index n = graph.n_items();
  const Index d = t.e.cols();

  DenseMatrix de = grads.e.empty() ? DenseMatrix(m + n, d) : std::move(grads.e);
  if (s.includes_collaborative()) axpy(de, grads.z);

  if (s.has_semantic_view()) {
    DenseMatrix dh_users = grads.h_users.empty() ? DenseMatrix(m, d) : std::move(grads.h_users);
    DenseMatrix dh_items = grads.h_items.empty() ? DenseMatrix(n, d) : std::move(grads.h_items);
    if (s.fusion != FusionMode::Collaborative) {
      add_block(dh_users, 0, slice_rows(grads.z, 0, m));
      add_block(dh_items, 0, slice_rows(grads.z, m, m + n));
    }
    {
      ScopedStage timer(clock, Stage::Sparse);
      spmm_acc(graph.adjacency_t, dh_users, dh_items, t.par);
    }

    if (s.needs_semantic_graph()) {
      const SemanticTrace& st = t.sem;
      std::vector<double> d_s(st.s_tilde.nnz(), 0.0);
      DenseMatrix dh = std::move(dh_items);
      {
        ScopedStage timer(clock, Stage::Sparse);
        for (Index l = s.ii_layers; l-- > 0;) {
          const DenseMatrix& h_prev = t.ii_layers[l];
          for (Index i = 0; i < n; ++i) {
            for (Index q = st.s_tilde.row_offsets[i]; q < st.s_tilde.row_offsets[i + 1]; ++q) {
              d_s[q] += dot(dh.row(i), h_prev.row(st.s_tilde.col_indices[q]));
            }
          }
          dh = spmm(st.s_tilde_t, dh, t.par);
        }
      }
      add_block(de, m, dh);

      std::vector<DenseMatrix> d_views;
      {
        ScopedStage timer(clock, Stage::Similarity);
        d_views = semantic_weights_backward(st, d_s);
      }

      std::array<DenseMatrix, 2> d_modal{DenseMatrix(n, t.item_modal[kVisual].cols()),
                                         DenseMatrix(n, t.item_modal[kTextual].cols())};
      switch (s.source) {
        case SemanticSource::Rca: {
          ScopedStage timer(clock, Stage::Rca);
          DenseMatrix d_att(m + n, t.x_att.cols());
          add_block(d_att, m, d_views[0]);
          auto d_x0 = rca_backward(t.rca, d_att, p, g);
          for (std::size_t k = 0; k < 2; ++k) {
            add_block(d_modal[k], 0, slice_rows(d_x0[k], m, m + n));
            const DenseMatrix* att = p.modal[k].attention.empty() ? nullptr : &p.modal[k].attention;
            DenseMatrix* d_att_vec = g.modal[k].attention.empty() ? nullptr : &g.modal[k].attention;
            axpy(d_modal[k], profile_backward(graph, t.item_modal[k], t.profiles[k],
                                              slice_rows(d_x0[k], 0, m), att, d_att_vec));
          }
          break;
        }
        case SemanticSource::Visual:
          d_modal[kVisual] = std::move(d_views[0]);
          break;
        case SemanticSource::Textual:
          d_modal[kTextual] = std::move(d_views[0]);
          break;
        case SemanticSource::Concat: {
          const Index dl = t.item_modal[kVisual].cols();
          d_modal[kVisual] = slice_cols(d_views[0], 0, dl);
          d_modal[kTextual] = slice_cols(d_views[0], dl, d_views[0].cols());
          break;
        }
        case SemanticSource::Sum:
          d_modal[kVisual] = d_views[0];
          d_modal[kTextual] = std::move(d_views[0]);
          break;
        case SemanticSource::Average:
          d_modal[kVisual] = std::move(d_views[0]);
          d_modal[kTextual] = std::move(d_views[1]);
          break;
      }
      matmul_tn_acc(t.features->visual, d_modal[kVisual], g.proj_v);
      matmul_tn_acc(t.features->textual, d_modal[kTextual], g.proj_t);
    } else {
      add_block(de, m, dh_items);
    }
  }

  // Collaborative stack.
  ScopedStage timer(clock, Stage::Sparse);
  const Index layers = s.ui_layers;
  std::vector<DenseMatrix> d_layers(layers + 1);
  if (s.readout == LayerReadout::Last) {
    d_layers[layers] = std::move(de);
  } else {
    const double inv = 1.0 / static_cast<double>(layers + 1);
    for (double& v : de.data()) v *= inv;
    for (Index l = 0; l <= layers; ++l) d_layers[l] = de;
  }
  for (Index l = layers; l > 0; --l) {
    DenseMatrix d_pre = std::move(d_layers[l]);
    if (d_pre.empty()) continue;
    if (s.activation == GcnActivation::LeakyRelu) {
      const DenseMatrix& pre = t.ui.pre[l - 1];
      for (Index q = 0; q < d_pre.size(); ++q)
        if (!(pre.data()[q] > 0.0)) d_pre.data()[q] *= s.leaky_slope;
    }
    DenseMatrix d_prop;
    if (s.trainable_gcn) {
      matmul_tn_acc(t.ui.propagated[l - 1], d_pre, g.w_gcn[l - 1]);
      d_prop = matmul_nt(d_pre, p.w_gcn[l - 1]);
    } else {
      d_prop = std::move(d_pre);
    }
    // The block adjacency is symmetric, so it is its own transpose.
    DenseMatrix back = spmm(t.propagation->adjacency_sym, d_prop, t.par);
    if (d_layers[l - 1].empty()) {
      d_layers[l - 1] = std::move(back);
    } else {
      axpy(d_layers[l - 1], back);
    }
  }
  axpy(g.id_emb, d_layers[0]);
}

}  // namespace crane
