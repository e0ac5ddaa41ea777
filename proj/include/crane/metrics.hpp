#pragma once

#include <span>
#include <vector>

#include "crane/dataset.hpp"
#include "crane/dense.hpp"
#include "crane/parallel.hpp"

namespace crane {

/// Items of one user in descending score order (ties: lower index first),
/// with masked items left out. May be truncated to a depth.
struct RankedList {
  Index user = 0;
  std::vector<Index> item_order;
};

/// Ranks `scores` with the items in `masked` (sorted ascending) removed and
/// keeps the first `depth` entries.
RankedList rank_items(Index user, std::span<const double> scores, std::span<const Index> masked,
                      Index depth);

/// |top-K ∩ relevant| / |relevant|; 0 for an empty relevant set.
double recall_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k);

/// Binary-gain DCG@K over IDCG with min(K, |relevant|) ideal terms.
double ndcg_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k);

struct MetricRow {
  Phase phase = Phase::Valid;
  Index k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  Index n_users = 0;
};

/// Running sum with Neumaier compensation.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Full-ranking evaluation. Scores are z_u . z_i with users stacked above
/// items in z. `masked_by_user` lists seen items per user (sorted). Masked
/// items are dropped from the relevant sets, and users left with no relevant
/// item are excluded from the averages.
std::vector<MetricRow> evaluate_rankings(const DenseMatrix& z, Index n_users, Index n_items,
                                         const std::vector<std::vector<Index>>& masked_by_user,
                                         const std::vector<std::vector<Index>>& relevant_by_user,
                                         Phase phase, std::span<const Index> ks,
                                         const Parallelism& par = {});

/// Masks train items, plus validation items in the test phase.
std::vector<MetricRow> evaluate_topk(const DenseMatrix& z, const DatasetBundle& data, Phase phase,
                                     std::span<const Index> ks, const Parallelism& par = {});

/// Recall@K against the training items themselves, nothing masked.
double train_recall(const DenseMatrix& z, const DatasetBundle& data, Index k);

}  // namespace crane
