#include "crane/knn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace crane {

std::vector<double> row_norms(const DenseMatrix& x) {
  std::vector<double> norms(x.rows());
  for (Index i = 0; i < x.rows(); ++i) norms[i] = std::sqrt(squared_norm(x.row(i)));
  return norms;
}

CsrMatrix blocked_similarity_topk(std::span<const DenseMatrix> views, Index k, Index block,
                                  const Parallelism& par) {
  if (views.empty()) throw std::invalid_argument("similarity_topk: no feature views");
  const Index n = views.front().rows();
  for (const auto& v : views) {
    if (v.rows() != n) throw std::invalid_argument("similarity_topk: views differ in row count");
  }
  if (k == 0) throw std::invalid_argument("similarity_topk: k must be at least 1");
  if (k >= n) {
    throw std::invalid_argument("similarity_topk: k=" + std::to_string(k) +
                                " must be smaller than the item count " + std::to_string(n));
  }
  if (block == 0) block = n;

  std::vector<std::vector<double>> norms;
  norms.reserve(views.size());
  for (const auto& v : views) norms.push_back(row_norms(v));
  const double inv_views = 1.0 / static_cast<double>(views.size());

  std::vector<Index> cols(n * k);
  std::vector<double> vals(n * k);

  const Index n_blocks = (n + block - 1) / block;
  parallel_for(n_blocks, par, [&](Index b_begin, Index b_end) {
    std::vector<double> scores(block * n);
    std::vector<std::pair<double, Index>> cand;
    cand.reserve(n);
    for (Index b = b_begin; b < b_end; ++b) {
      const Index r0 = b * block;
      const Index r1 = std::min(n, r0 + block);
      std::fill(scores.begin(), scores.end(), 0.0);
      for (Index v = 0; v < views.size(); ++v) {
        const DenseMatrix& x = views[v];
        for (Index i = r0; i < r1; ++i) {
          double* srow = scores.data() + (i - r0) * n;
          for (Index j = 0; j < n; ++j)
            srow[j] += cosine(x.row(i), norms[v][i], x.row(j), norms[v][j]);
        }
      }
      for (Index i = r0; i < r1; ++i) {
        const double* srow = scores.data() + (i - r0) * n;
        cand.clear();
        for (Index j = 0; j < n; ++j) {
          if (j != i) cand.emplace_back(srow[j] * inv_views, j);
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                          [](const auto& a, const auto& b) {
                            return a.first != b.first ? a.first > b.first : a.second < b.second;
                          });
        std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        for (Index t = 0; t < k; ++t) {
          cols[i * k + t] = cand[t].second;
          vals[i * k + t] = cand[t].first;
        }
      }
    }
  });

  CsrMatrix out;
  out.n_rows = n;
  out.n_cols = n;
  out.row_offsets.resize(n + 1);
  for (Index i = 0; i <= n; ++i) out.row_offsets[i] = i * k;
  out.col_indices = std::move(cols);
  out.values = std::move(vals);
  return out;
}

CsrMatrix blocked_cosine_topk(const DenseMatrix& x, Index k, Index block, const Parallelism& par) {
  return blocked_similarity_topk(std::span<const DenseMatrix>(&x, 1), k, block, par);
}

}  // namespace crane
