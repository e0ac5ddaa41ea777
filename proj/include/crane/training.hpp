#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "crane/dataset.hpp"
#include "crane/model.hpp"
#include "crane/params.hpp"
#include "crane/rng.hpp"
#include "crane/stage_clock.hpp"

namespace crane {

struct TripletBatch {
  std::vector<Index> users;
  std::vector<Index> pos_items;
  std::vector<Index> neg_items;

  Index size() const { return users.size(); }
};

struct LossWeights {
  double beta = 0.0;
  double lambda = 0.0;
  double tau = 1.0;

  /// Throws unless tau > 0 and beta, lambda >= 0.
  void validate() const;
};

LossWeights loss_weights(const TrainConfig& cfg);

struct AdamState {
  ParameterTensors m;
  ParameterTensors v;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState adam_state_for(const ParameterTensors& p);

/// Positives uniformly over training interactions (with replacement);
/// negatives uniformly over items the user has not interacted with.
TripletBatch sample_triplets(const InteractionGraph& g, Index batch_size, SeededRng& rng);

/// log(1 + e^x) without overflow.
double softplus(double x);

/// Sum over triplets of -log sigmoid(pos - neg).
double bpr_loss(std::span<const double> scores_pos, std::span<const double> scores_neg);

/// Cosine InfoNCE over the rows listed in `batch`, which index both views.
double infonce_loss(const DenseMatrix& view_a, const DenseMatrix& view_b, double tau,
                    std::span<const Index> batch);

/// Same loss; adds scale * gradient into d_a and d_b (same shapes as the views).
double infonce_loss_grad(const DenseMatrix& view_a, const DenseMatrix& view_b, double tau,
                         std::span<const Index> batch, double scale, DenseMatrix& d_a,
                         DenseMatrix& d_b);

struct LossBreakdown {
  double total = 0.0;
  double bpr = 0.0;
  double cl = 0.0;  // user side + item side, before beta
  double l2 = 0.0;  // before lambda
};

/// Sorted unique values.
std::vector<Index> unique_sorted(std::span<const Index> values);

/// L = BPR + beta * (CL_user + CL_item) + lambda * ||Theta||^2.
LossBreakdown loss_breakdown(const ForwardTrace& trace, const TripletBatch& batch,
                             const LossWeights& w, const ModelParameters& p);
double total_loss(const ForwardTrace& trace, const TripletBatch& batch, const LossWeights& w,
                  const ModelParameters& p);

/// Exact gradient of total_loss. Throws if the trace was recorded for a
/// different parameter version.
GradientSet backward_pass(const ForwardTrace& trace, const TripletBatch& batch,
                          const LossWeights& w, const ModelParameters& p,
                          StageClock* clock = nullptr);

/// Central difference (L(+h) - L(-h)) / 2h, where loss_at(delta) evaluates
/// the loss with one parameter entry shifted by delta.
double finite_diff_grad(const std::function<double(double)>& loss_at, double h);

/// Bias-corrected Adam update in place. Throws on a non-finite gradient.
void adam_step(ModelParameters& p, const GradientSet& g, AdamState& s, double lr);

/// Trained parameters of every branch plus the item-graph support each
/// branch was last evaluated with.
struct TrainedModel {
  std::vector<ModelStructure> structures;
  std::vector<ModelParameters> branches;
  std::vector<SemanticGraph> semantic;
};

/// Inference representations with DropEdge off. Multiple branches are
/// concatenated column-wise, so dot products sum the branch scores.
DenseMatrix inference_representations(const TrainedModel& model, const DatasetBundle& data,
                                      const Parallelism& par = {});

struct EpochRecord {
  Index epoch = 0;
  double loss_total = 0.0;
  double loss_bpr = 0.0;
  double loss_cl = 0.0;
  double recall20_valid = 0.0;
  double ndcg20_valid = 0.0;
  double epoch_seconds = 0.0;
};
using ConvergenceLog = std::vector<EpochRecord>;

struct EpochLoss {
  double total = 0.0;
  double bpr = 0.0;
  double cl = 0.0;
  Index steps = 0;
};

/// Epoch-level driver: owns parameters, optimiser state and random streams.
class Trainer {
 public:
  Trainer(const DatasetBundle& data, const TrainConfig& cfg, const SeededRng& rng,
          Parallelism par = {}, StageClock* clock = nullptr);

  /// Resamples DropEdge, rebuilds the item graph when due and runs the
  /// epoch's steps (ceil(train / batch_size) unless max_steps > 0).
  EpochLoss run_epoch(Index epoch, Index max_steps = 0);

  const TrainedModel& model() const { return model_; }
  const DatasetBundle& data() const { return data_; }

 private:
  const DatasetBundle& data_;
  TrainConfig cfg_;
  LossWeights weights_;
  Parallelism par_;
  StageClock* clock_;
  SeededRng dropedge_rng_;
  SeededRng batch_rng_;
  TrainedModel model_;
  std::vector<AdamState> adam_;
};

struct TrainResult {
  TrainedModel best;
  ConvergenceLog log;
  Index best_epoch = 0;
};

/// Epoch loop with early stopping on validation Recall@20 (strict
/// improvement, `patience` epochs). Returns the best-validation parameters.
using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const DatasetBundle& data, const TrainConfig& cfg, const SeededRng& rng,
                  const Parallelism& par = {}, const EpochCallback& on_epoch = {});

}  // namespace crane
