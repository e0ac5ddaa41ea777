#pragma once

#include <span>
#include <vector>

#include "crane/dense.hpp"
#include "crane/parallel.hpp"
#include "crane/sparse.hpp"

namespace crane {

std::vector<double> row_norms(const DenseMatrix& x);

/// Cosine similarity of two rows given their norms. Zero-norm rows are
/// similar to nothing: the result is 0.
inline double cosine(std::span<const double> a, double norm_a, std::span<const double> b,
                     double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return dot(a, b) / (norm_a * norm_b);
}

/// Adds upstream * d cos(a, b) / d a to out, where cos_ab = cosine(a, b).
inline void add_cosine_grad(std::span<const double> a, double norm_a, std::span<const double> b,
                            double norm_b, double cos_ab, double upstream, std::span<double> out) {
  if (norm_a == 0.0 || norm_b == 0.0 || upstream == 0.0) return;
  const double inv_ab = 1.0 / (norm_a * norm_b);
  const double inv_aa = cos_ab / (norm_a * norm_a);
  for (std::size_t j = 0; j < a.size(); ++j) out[j] += upstream * (b[j] * inv_ab - a[j] * inv_aa);
}

/// Top-k cosine neighbours of every row of x, excluding the row itself.
///
/// Similarities are computed `block` rows at a time so at most block x N
/// scores are alive at once. Signed values are kept; ties go to the lower
/// column index. The result is an N x N CSR matrix holding raw similarities.
CsrMatrix blocked_cosine_topk(const DenseMatrix& x, Index k, Index block,
                              const Parallelism& par = {});

/// Generalisation used by graph-level late fusion: the similarity of (i, j)
/// is the mean of the per-view cosines. All views must have the same row
/// count. With one view this is blocked_cosine_topk.
CsrMatrix blocked_similarity_topk(std::span<const DenseMatrix> views, Index k, Index block,
                                  const Parallelism& par = {});

}  // namespace crane
