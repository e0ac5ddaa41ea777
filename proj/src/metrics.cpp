#include "crane/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace crane {

RankedList rank_items(Index user, std::span<const double> scores, std::span<const Index> masked,
                      Index depth) {
  RankedList out;
  out.user = user;
  out.item_order.reserve(scores.size());
  Index next_mask = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    while (next_mask < masked.size() && masked[next_mask] < i) ++next_mask;
    if (next_mask < masked.size() && masked[next_mask] == i) continue;
    out.item_order.push_back(i);
  }
  const auto before = [&](Index a, Index b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  const Index keep = std::min(depth, out.item_order.size());
  std::partial_sort(out.item_order.begin(),
                    out.item_order.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.item_order.end(), before);
  out.item_order.resize(keep);
  return out;
}

namespace {

bool contains(std::span<const Index> sorted, Index x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

std::vector<Index> sorted_copy(std::span<const Index> v) {
  std::vector<Index> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double recall_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k) {
  if (relevant.empty()) return 0.0;
  const auto rel = sorted_copy(relevant);
  const Index depth = std::min(k, ranked.item_order.size());
  Index hits = 0;
  for (Index r = 0; r < depth; ++r) hits += contains(rel, ranked.item_order[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double ndcg_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k) {
  if (relevant.empty()) return 0.0;
  const auto rel = sorted_copy(relevant);
  const Index depth = std::min(k, ranked.item_order.size());
  double dcg = 0.0;
  for (Index r = 0; r < depth; ++r) {
    if (contains(rel, ranked.item_order[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  const Index ideal = std::min(k, rel.size());
  for (Index r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

std::vector<MetricRow> evaluate_rankings(const DenseMatrix& z, Index n_users, Index n_items,
                                         const std::vector<std::vector<Index>>& masked_by_user,
                                         const std::vector<std::vector<Index>>& relevant_by_user,
                                         Phase phase, std::span<const Index> ks,
                                         const Parallelism& par) {
  if (z.rows() != n_users + n_items) {
    throw std::invalid_argument("evaluate: representation rows do not match users + items");
  }
  if (masked_by_user.size() != n_users || relevant_by_user.size() != n_users) {
    throw std::invalid_argument("evaluate: per-user lists do not match the user count");
  }
  // A masked item can never be ranked, so it does not count as relevant.
  std::vector<std::vector<Index>> relevant(n_users);
  for (Index u = 0; u < n_users; ++u) {
    std::vector<Index> rel = relevant_by_user[u];
    std::sort(rel.begin(), rel.end());
    std::set_difference(rel.begin(), rel.end(), masked_by_user[u].begin(),
                        masked_by_user[u].end(), std::back_inserter(relevant[u]));
  }
  const Index depth = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  // Per-user metric values, reduced afterwards in user order.
  std::vector<double> recall(n_users * ks.size(), 0.0);
  std::vector<double> ndcg(n_users * ks.size(), 0.0);
  parallel_for(n_users, par, [&](Index begin, Index end) {
    std::vector<double> scores(n_items);
    for (Index u = begin; u < end; ++u) {
      if (relevant[u].empty()) continue;
      const auto zu = z.row(u);
      for (Index i = 0; i < n_items; ++i) scores[i] = dot(zu, z.row(n_users + i));
      const RankedList ranked = rank_items(u, scores, masked_by_user[u], depth);
      for (Index q = 0; q < ks.size(); ++q) {
        recall[u * ks.size() + q] = recall_at_k(ranked, relevant[u], ks[q]);
        ndcg[u * ks.size() + q] = ndcg_at_k(ranked, relevant[u], ks[q]);
      }
    }
  });

  Index counted = 0;
  for (Index u = 0; u < n_users; ++u) counted += relevant[u].empty() ? 0 : 1;
  std::vector<MetricRow> rows;
  for (Index q = 0; q < ks.size(); ++q) {
    CompensatedSum r;
    CompensatedSum n;
    for (Index u = 0; u < n_users; ++u) {
      if (relevant[u].empty()) continue;
      r.add(recall[u * ks.size() + q]);
      n.add(ndcg[u * ks.size() + q]);
    }
    MetricRow row;
    row.phase = phase;
    row.k = ks[q];
    row.n_users = counted;
    if (counted > 0) {
      row.recall = r.value() / static_cast<double>(counted);
      row.ndcg = n.value() / static_cast<double>(counted);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<MetricRow> evaluate_topk(const DenseMatrix& z, const DatasetBundle& data, Phase phase,
                                     std::span<const Index> ks, const Parallelism& par) {
  std::vector<std::vector<Index>> masked = data.graph.user_neighbors;
  if (phase == Phase::Test) {
    for (Index u = 0; u < data.n_users; ++u) {
      auto& m = masked[u];
      m.insert(m.end(), data.valid_by_user[u].begin(), data.valid_by_user[u].end());
      std::sort(m.begin(), m.end());
    }
  }
  return evaluate_rankings(z, data.n_users, data.n_items, masked, data.relevant(phase), phase, ks,
                           par);
}

double train_recall(const DenseMatrix& z, const DatasetBundle& data, Index k) {
  const std::vector<std::vector<Index>> none(data.n_users);
  const Index ks[] = {k};
  return evaluate_rankings(z, data.n_users, data.n_items, none, data.graph.user_neighbors,
                           Phase::Valid, ks)
      .front()
      .recall;
}

}  // namespace crane
