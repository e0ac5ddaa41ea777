#pragma once

#include <array>
#include <vector>

#include "crane/dense.hpp"
#include "crane/params.hpp"

namespace crane {

struct RcaOptions {
  Index block = 256;          // rows of each correlation block
  bool attention = true;      // false drops the refinement branch (F = 0)
  bool record = true;         // keep per-round activations for backward
  Index cache_limit = 4096;   // retain full correlation maps up to this many entities
};

struct RcaModalTrace {
  DenseMatrix x_in;         // X^{m(r-1)}
  DenseMatrix anchors;      // P^m = E' W_m
  DenseMatrix values;       // X^{m(r-1)} W_a^m
  DenseMatrix refined_pre;  // C^m X^{m(r-1)} W_a^m, before ReLU
  DenseMatrix correlation;  // C^m, only when cached
};

struct RcaRoundTrace {
  DenseMatrix joint;  // E' = [X^v; X^t] W_tr + b_tr
  std::array<RcaModalTrace, 2> modal;
};

struct RcaTrace {
  std::vector<RcaRoundTrace> rounds;
  bool correlations_cached = false;
  RcaOptions options;
};

/// Recursive cross-modal attention over stacked user+item modality matrices.
///
/// Each round forms E' = [X^v; X^t] W_tr + b_tr and, per modality,
/// P = E' W_m, C = tanh(X P^T), X <- ReLU(C X W_a) + X W_f. The correlation
/// maps are produced `block` rows at a time. Returns [X^{v(R)}; X^{t(R)}].
/// Throws std::runtime_error naming the round and stage if a non-finite value
/// appears.
DenseMatrix rca_forward(const DenseMatrix& x_v0, const DenseMatrix& x_t0,
                        const ParameterTensors& p, Index rounds, RcaTrace& trace,
                        const RcaOptions& options = {});

/// Accumulates parameter gradients into g and returns the gradients with
/// respect to the two input matrices.
std::array<DenseMatrix, 2> rca_backward(const RcaTrace& trace, const DenseMatrix& d_x_att,
                                        const ParameterTensors& p, GradientSet& g);

}  // namespace crane
