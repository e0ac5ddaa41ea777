#include "crane/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "crane/knn.hpp"
#include "crane/metrics.hpp"

namespace crane {

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("loss weights: tau must be positive");
  if (!(beta >= 0.0) || !(lambda >= 0.0)) {
    throw std::invalid_argument("loss weights: beta and lambda must be non-negative");
  }
}

LossWeights loss_weights(const TrainConfig& cfg) {
  LossWeights w{cfg.beta, cfg.lambda, cfg.tau};
  w.validate();
  return w;
}

AdamState adam_state_for(const ParameterTensors& p) {
  AdamState s;
  s.m = zeros_like(p);
  s.v = zeros_like(p);
  return s;
}

TripletBatch sample_triplets(const InteractionGraph& g, Index batch_size, SeededRng& rng) {
  const CsrMatrix& a = g.adjacency;
  if (a.nnz() == 0) throw std::invalid_argument("sample_triplets: graph has no interactions");
  TripletBatch b;
  b.users.reserve(batch_size);
  b.pos_items.reserve(batch_size);
  b.neg_items.reserve(batch_size);
  for (Index t = 0; t < batch_size; ++t) {
    const Index edge = rng.uniform_index(a.nnz());
    const auto row_end = std::upper_bound(a.row_offsets.begin(), a.row_offsets.end(), edge);
    const Index u = static_cast<Index>(row_end - a.row_offsets.begin()) - 1;
    const auto& seen = g.user_neighbors[u];
    if (seen.size() >= g.n_items()) {
      throw std::invalid_argument("sample_triplets: user " + std::to_string(u) +
                                  " has interacted with every item");
    }
    Index neg = rng.uniform_index(g.n_items());
    while (std::binary_search(seen.begin(), seen.end(), neg)) neg = rng.uniform_index(g.n_items());
    b.users.push_back(u);
    b.pos_items.push_back(a.col_indices[edge]);
    b.neg_items.push_back(neg);
  }
  return b;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double bpr_loss(std::span<const double> scores_pos, std::span<const double> scores_neg) {
  if (scores_pos.size() != scores_neg.size()) {
    throw std::invalid_argument("bpr_loss: score arrays differ in length");
  }
  double loss = 0.0;
  for (Index t = 0; t < scores_pos.size(); ++t) loss += softplus(scores_neg[t] - scores_pos[t]);
  return loss;
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shared by the loss and its gradient; d_a/d_b may be null.
double infonce_impl(const DenseMatrix& a, const DenseMatrix& b, double tau,
                    std::span<const Index> batch, double scale, DenseMatrix* d_a,
                    DenseMatrix* d_b) {
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: tau must be positive");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("infonce: views differ in shape");
  }
  const Index n = batch.size();
  std::vector<double> na(n);
  std::vector<double> nb(n);
  for (Index x = 0; x < n; ++x) {
    na[x] = std::sqrt(squared_norm(a.row(batch[x])));
    nb[x] = std::sqrt(squared_norm(b.row(batch[x])));
  }
  std::vector<double> cos(n * n);
  for (Index x = 0; x < n; ++x)
    for (Index y = 0; y < n; ++y)
      cos[x * n + y] = cosine(a.row(batch[x]), na[x], b.row(batch[y]), nb[y]);

  double loss = 0.0;
  std::vector<double> soft(n);
  for (Index x = 0; x < n; ++x) {
    double top = -std::numeric_limits<double>::infinity();
    for (Index y = 0; y < n; ++y) top = std::max(top, cos[x * n + y] / tau);
    double total = 0.0;
    for (Index y = 0; y < n; ++y) {
      soft[y] = std::exp(cos[x * n + y] / tau - top);
      total += soft[y];
    }
    loss += top + std::log(total) - cos[x * n + x] / tau;
    if (d_a == nullptr) continue;
    for (Index y = 0; y < n; ++y) {
      const double d_cos = scale * (soft[y] / total - (x == y ? 1.0 : 0.0)) / tau;
      const Index ra = batch[x];
      const Index rb = batch[y];
      const double c = cos[x * n + y];
      add_cosine_grad(a.row(ra), na[x], b.row(rb), nb[y], c, d_cos, d_a->row(ra));
      add_cosine_grad(b.row(rb), nb[y], a.row(ra), na[x], c, d_cos, d_b->row(rb));
    }
  }
  return loss;
}

bool contrastive_active(const ForwardTrace& t, const LossWeights& w) {
  return t.structure.contrastive && t.structure.has_semantic_view() && w.beta > 0.0;
}

// Stacked-row indices of the embeddings touched by the batch.
std::vector<Index> batch_entities(const TripletBatch& b, Index n_users) {
  std::vector<Index> rows(b.users.begin(), b.users.end());
  for (Index i : b.pos_items) rows.push_back(n_users + i);
  for (Index i : b.neg_items) rows.push_back(n_users + i);
  return unique_sorted(rows);
}

void check_batch(const TripletBatch& b, Index n_users, Index n_items) {
  if (b.pos_items.size() != b.users.size() || b.neg_items.size() != b.users.size()) {
    throw std::invalid_argument("triplet batch: arrays differ in length");
  }
  for (Index t = 0; t < b.size(); ++t) {
    if (b.users[t] >= n_users || b.pos_items[t] >= n_items || b.neg_items[t] >= n_items) {
      throw std::out_of_range("triplet batch: index out of range at " + std::to_string(t));
    }
  }
}

}  // namespace

double infonce_loss(const DenseMatrix& view_a, const DenseMatrix& view_b, double tau,
                    std::span<const Index> batch) {
  return infonce_impl(view_a, view_b, tau, batch, 0.0, nullptr, nullptr);
}

double infonce_loss_grad(const DenseMatrix& view_a, const DenseMatrix& view_b, double tau,
                         std::span<const Index> batch, double scale, DenseMatrix& d_a,
                         DenseMatrix& d_b) {
  if (!d_a.same_shape(view_a) || !d_b.same_shape(view_b)) {
    throw std::invalid_argument("infonce: gradient buffers differ in shape from the views");
  }
  return infonce_impl(view_a, view_b, tau, batch, scale, &d_a, &d_b);
}

std::vector<Index> unique_sorted(std::span<const Index> values) {
  std::vector<Index> out(values.begin(), values.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LossBreakdown loss_breakdown(const ForwardTrace& t, const TripletBatch& batch,
                             const LossWeights& w, const ModelParameters& p) {
  const Index m = t.n_users();
  const Index n = t.n_items();
  check_batch(batch, m, n);
  LossBreakdown out;
  std::vector<double> pos(batch.size());
  std::vector<double> neg(batch.size());
  for (Index x = 0; x < batch.size(); ++x) {
    pos[x] = score(t.z, m, batch.users[x], batch.pos_items[x]);
    neg[x] = score(t.z, m, batch.users[x], batch.neg_items[x]);
  }
  out.bpr = bpr_loss(pos, neg);

  if (contrastive_active(t, w) && batch.size() > 0) {
    const auto users = unique_sorted(batch.users);
    const auto items = unique_sorted(batch.pos_items);
    out.cl = infonce_loss(slice_rows(t.e, 0, m), t.h_users, w.tau, users) +
             infonce_loss(slice_rows(t.e, m, m + n), t.h_items, w.tau, items);
  }

  if (w.lambda > 0.0) {
    for (Index r : batch_entities(batch, m)) out.l2 += squared_norm(p.id_emb.row(r));
    for (const auto& [name, tensor] : named_tensors(p)) {
      if (is_decayed_weight(name)) out.l2 += squared_norm(tensor->data());
    }
  }
  out.total = out.bpr + w.beta * out.cl + w.lambda * out.l2;
  return out;
}

double total_loss(const ForwardTrace& trace, const TripletBatch& batch, const LossWeights& w,
                  const ModelParameters& p) {
  return loss_breakdown(trace, batch, w, p).total;
}

GradientSet backward_pass(const ForwardTrace& t, const TripletBatch& batch, const LossWeights& w,
                          const ModelParameters& p, StageClock* clock) {
  if (t.version != p.version) {
    throw std::runtime_error("backward_pass: trace recorded at parameter version " +
                             std::to_string(t.version) + " but parameters are at version " +
                             std::to_string(p.version));
  }
  const Index m = t.n_users();
  const Index n = t.n_items();
  check_batch(batch, m, n);
  GradientSet g = zeros_like(p);

  RepresentationGrads rg;
  {
    ScopedStage timer(clock, Stage::Loss);
    rg.z = DenseMatrix(t.z.rows(), t.z.cols());
    for (Index x = 0; x < batch.size(); ++x) {
      const Index u = batch.users[x];
      const Index i = m + batch.pos_items[x];
      const Index j = m + batch.neg_items[x];
      const double margin = dot(t.z.row(u), t.z.row(i)) - dot(t.z.row(u), t.z.row(j));
      const double coef = -sigmoid(-margin);  // d softplus(-margin) / d margin
      auto du = rg.z.row(u);
      auto di = rg.z.row(i);
      auto dj = rg.z.row(j);
      const auto zu = t.z.row(u);
      const auto zi = t.z.row(i);
      const auto zj = t.z.row(j);
      for (Index c = 0; c < du.size(); ++c) {
        du[c] += coef * (zi[c] - zj[c]);
        di[c] += coef * zu[c];
        dj[c] -= coef * zu[c];
      }
    }

    if (contrastive_active(t, w) && batch.size() > 0) {
      const Index d = t.e.cols();
      const auto users = unique_sorted(batch.users);
      const auto items = unique_sorted(batch.pos_items);
      DenseMatrix de_users(m, d);
      DenseMatrix de_items(n, d);
      rg.h_users = DenseMatrix(m, d);
      rg.h_items = DenseMatrix(n, d);
      infonce_loss_grad(slice_rows(t.e, 0, m), t.h_users, w.tau, users, w.beta, de_users,
                        rg.h_users);
      infonce_loss_grad(slice_rows(t.e, m, m + n), t.h_items, w.tau, items, w.beta, de_items,
                        rg.h_items);
      rg.e = vconcat(de_users, de_items);
    }
  }

  backward_representations(t, p, std::move(rg), g, clock);

  if (w.lambda > 0.0) {
    const double two_lambda = 2.0 * w.lambda;
    for (Index r : batch_entities(batch, m)) {
      auto gr = g.id_emb.row(r);
      const auto pr = p.id_emb.row(r);
      for (Index c = 0; c < gr.size(); ++c) gr[c] += two_lambda * pr[c];
    }
    auto grads = named_tensors(g);
    const auto params = named_tensors(p);
    for (Index q = 0; q < params.size(); ++q) {
      if (is_decayed_weight(params[q].first)) axpy(*grads[q].second, *params[q].second, two_lambda);
    }
  }
  return g;
}

double finite_diff_grad(const std::function<double(double)>& loss_at, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  return (loss_at(h) - loss_at(-h)) / (2.0 * h);
}

void adam_step(ModelParameters& p, const GradientSet& g, AdamState& s, double lr) {
  auto params = named_tensors(p);
  const auto grads = named_tensors(g);
  auto firsts = named_tensors(s.m);
  auto seconds = named_tensors(s.v);
  if (grads.size() != params.size() || firsts.size() != params.size() ||
      seconds.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient or moment tensors do not match parameters");
  }
  for (Index q = 0; q < params.size(); ++q) {
    if (!grads[q].second->same_shape(*params[q].second)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + params[q].first);
    }
    if (!grads[q].second->all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient in " + params[q].first);
    }
  }
  ++s.step_count;
  const double t = static_cast<double>(s.step_count);
  const double bias1 = 1.0 - std::pow(s.beta1, t);
  const double bias2 = 1.0 - std::pow(s.beta2, t);
  for (Index q = 0; q < params.size(); ++q) {
    auto theta = params[q].second->data();
    const auto grad = grads[q].second->data();
    auto m1 = firsts[q].second->data();
    auto m2 = seconds[q].second->data();
    for (Index x = 0; x < theta.size(); ++x) {
      m1[x] = s.beta1 * m1[x] + (1.0 - s.beta1) * grad[x];
      m2[x] = s.beta2 * m2[x] + (1.0 - s.beta2) * grad[x] * grad[x];
      const double m_hat = m1[x] / bias1;
      const double v_hat = m2[x] / bias2;
      theta[x] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
  }
  ++p.version;
}

DenseMatrix inference_representations(const TrainedModel& model, const DatasetBundle& data,
                                      const Parallelism& par) {
  const SampledGraph full = full_propagation_graph(data.graph);
  DenseMatrix z;
  for (Index b = 0; b < model.branches.size(); ++b) {
    const ModelStructure& s = model.structures[b];
    ForwardInputs in{data.graph, data.feats, full,
                     s.needs_semantic_graph() ? &model.semantic[b] : nullptr, par, nullptr};
    ForwardTrace t = forward(model.branches[b], s, in);
    z = b == 0 ? std::move(t.z) : hconcat(z, t.z);
  }
  return z;
}

Trainer::Trainer(const DatasetBundle& data, const TrainConfig& cfg, const SeededRng& rng,
                 Parallelism par, StageClock* clock)
    : data_(data),
      cfg_(cfg),
      weights_(loss_weights(cfg)),
      par_(par),
      clock_(clock),
      dropedge_rng_(rng.derive(1)),
      batch_rng_(rng.derive(2)) {
  validate_config(cfg);
  SeededRng init_rng = rng.derive(0);
  const ModelDims dims = dims_for(cfg, data.n_users, data.n_items, data.feats.visual.cols(),
                                  data.feats.textual.cols());
  model_.structures = structures_for(cfg);
  for (const auto& s : model_.structures) {
    if (s.needs_semantic_graph() && s.k >= data.n_items) {
      throw std::invalid_argument("k=" + std::to_string(s.k) + " must be below the item count " +
                                  std::to_string(data.n_items));
    }
    model_.branches.push_back(init_params(dims, init_rng));
    model_.semantic.emplace_back();
    adam_.push_back(adam_state_for(model_.branches.back()));
  }
}

EpochLoss Trainer::run_epoch(Index epoch, Index max_steps) {
  EpochLoss out;
  SampledGraph sampled;
  {
    ScopedStage timer(clock_, Stage::Sparse);
    sampled = dropedge_sample(data_.graph, dropedge_rng_);
  }
  for (Index b = 0; b < model_.branches.size(); ++b) {
    const ModelStructure& s = model_.structures[b];
    if (!s.needs_semantic_graph()) continue;
    const bool missing = model_.semantic[b].s_tilde.n_rows == 0;
    const bool due = cfg_.rebuild_interval > 0 && (epoch - 1) % cfg_.rebuild_interval == 0;
    if (missing || due) {
      model_.semantic[b] = build_semantic_graph_for(model_.branches[b], s, data_.graph,
                                                    data_.feats, epoch, par_, clock_);
    }
  }

  const Index n_train = data_.split.train.size();
  const Index steps =
      max_steps > 0 ? max_steps : (n_train + cfg_.batch_size - 1) / cfg_.batch_size;
  for (Index step = 0; step < steps; ++step) {
    const TripletBatch batch = sample_triplets(data_.graph, cfg_.batch_size, batch_rng_);
    for (Index b = 0; b < model_.branches.size(); ++b) {
      const ModelStructure& s = model_.structures[b];
      ModelParameters& p = model_.branches[b];
      ForwardInputs in{data_.graph, data_.feats, sampled,
                       s.needs_semantic_graph() ? &model_.semantic[b] : nullptr, par_, clock_};
      const ForwardTrace trace = forward(p, s, in);
      LossBreakdown loss;
      {
        ScopedStage timer(clock_, Stage::Loss);
        loss = loss_breakdown(trace, batch, weights_, p);
      }
      const GradientSet g = backward_pass(trace, batch, weights_, p, clock_);
      ScopedStage timer(clock_, Stage::Optimizer);
      adam_step(p, g, adam_[b], cfg_.lr);
      out.total += loss.total;
      out.bpr += loss.bpr;
      out.cl += loss.cl;
    }
    ++out.steps;
  }
  return out;
}

TrainResult train(const DatasetBundle& data, const TrainConfig& cfg, const SeededRng& rng,
                  const Parallelism& par, const EpochCallback& on_epoch) {
  Trainer trainer(data, cfg, rng, par);
  TrainResult result;
  double best = -1.0;
  Index since_best = 0;
  const Index ks[] = {20};
  for (Index epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const EpochLoss loss = trainer.run_epoch(epoch);
    const DenseMatrix z = inference_representations(trainer.model(), data, par);
    const MetricRow valid = evaluate_topk(z, data, Phase::Valid, ks, par).front();
    const auto elapsed = std::chrono::steady_clock::now() - start;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_total = loss.total;
    rec.loss_bpr = loss.bpr;
    rec.loss_cl = loss.cl;
    rec.recall20_valid = valid.recall;
    rec.ndcg20_valid = valid.ndcg;
    rec.epoch_seconds = std::chrono::duration<double>(elapsed).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (valid.recall > best) {
      best = valid.recall;
      result.best = trainer.model();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace crane
