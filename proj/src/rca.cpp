#include "crane/rca.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace crane {

namespace {

void check_finite(const DenseMatrix& m, Index round, const char* stage, const char* modality) {
  if (!m.all_finite()) {
    std::string msg = "rca: non-finite values in round " + std::to_string(round) + ", stage '" +
                      stage + "'";
    if (modality != nullptr) msg += std::string(" (") + modality + ")";
    throw std::runtime_error(msg);
  }
}

// tanh(X_block P^T) for rows [r0, r1).
DenseMatrix correlation_block(const DenseMatrix& x, const DenseMatrix& anchors_t, Index r0,
                              Index r1) {
  DenseMatrix block = matmul(slice_rows(x, r0, r1), anchors_t);
  for (double& v : block.data()) v = std::tanh(v);
  return block;
}

void add_bias(DenseMatrix& m, const DenseMatrix& bias) {
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (Index j = 0; j < m.cols(); ++j) row[j] += bias(0, j);
  }
}

void add_rows(DenseMatrix& dst, Index r0, const DenseMatrix& src) {
  for (Index i = 0; i < src.rows(); ++i) {
    auto d = dst.row(r0 + i);
    const auto s = src.row(i);
    for (Index j = 0; j < s.size(); ++j) d[j] += s[j];
  }
}

}  // namespace

DenseMatrix rca_forward(const DenseMatrix& x_v0, const DenseMatrix& x_t0,
                        const ParameterTensors& p, Index rounds, RcaTrace& trace,
                        const RcaOptions& options) {
  if (!x_v0.same_shape(x_t0)) throw std::invalid_argument("rca_forward: modality shapes differ");
  const Index n = x_v0.rows();
  const Index block = std::max<Index>(1, options.block);
  trace.rounds.clear();
  trace.options = options;
  trace.correlations_cached = options.record && n <= options.cache_limit;

  std::array<DenseMatrix, 2> x{x_v0, x_t0};
  for (Index r = 1; r <= rounds; ++r) {
    RcaRoundTrace round;
    std::array<DenseMatrix, 2> next;
    if (options.attention) {
      round.joint = matmul(hconcat(x[kVisual], x[kTextual]), p.w_tr);
      add_bias(round.joint, p.b_tr);
      check_finite(round.joint, r, "joint transform", nullptr);
    }
    for (std::size_t m = 0; m < 2; ++m) {
      const char* tag = m == kVisual ? "visual" : "textual";
      const ModalityWeights& w = p.modal[m];
      RcaModalTrace mt;
      DenseMatrix out = matmul(x[m], w.w_f);
      if (options.attention) {
        mt.anchors = matmul(round.joint, w.w_m);
        check_finite(mt.anchors, r, "anchor projection", tag);
        mt.values = matmul(x[m], w.w_a);
        const DenseMatrix anchors_t = transpose(mt.anchors);
        mt.refined_pre = DenseMatrix(n, x[m].cols());
        if (trace.correlations_cached) mt.correlation = DenseMatrix(n, n);
        for (Index r0 = 0; r0 < n; r0 += block) {
          const Index r1 = std::min(n, r0 + block);
          const DenseMatrix c = correlation_block(x[m], anchors_t, r0, r1);
          add_rows(mt.refined_pre, r0, matmul(c, mt.values));
          if (trace.correlations_cached) {
            std::copy(c.data().begin(), c.data().end(), mt.correlation.row(r0).begin());
          }
        }
        check_finite(mt.refined_pre, r, "correlation refinement", tag);
        for (Index i = 0; i < out.size(); ++i) out.data()[i] += std::max(0.0, mt.refined_pre.data()[i]);
      }
      check_finite(out, r, "residual update", tag);
      if (options.record) {
        mt.x_in = std::move(x[m]);
        round.modal[m] = std::move(mt);
      }
      next[m] = std::move(out);
    }
    x = std::move(next);
    if (options.record) trace.rounds.push_back(std::move(round));
  }
  return hconcat(x[kVisual], x[kTextual]);
}

std::array<DenseMatrix, 2> rca_backward(const RcaTrace& trace, const DenseMatrix& d_x_att,
                                        const ParameterTensors& p, GradientSet& g) {
  const Index half = d_x_att.cols() / 2;
  std::array<DenseMatrix, 2> dx{slice_cols(d_x_att, 0, half),
                                slice_cols(d_x_att, half, d_x_att.cols())};
  if (!trace.options.record && !trace.rounds.empty()) {
    throw std::logic_error("rca_backward: trace was not recorded");
  }
  const bool attention = trace.options.attention;
  const Index block = std::max<Index>(1, trace.options.block);

  for (auto it = trace.rounds.rbegin(); it != trace.rounds.rend(); ++it) {
    const RcaRoundTrace& round = *it;
    const Index n = round.modal[0].x_in.rows();
    std::array<DenseMatrix, 2> dx_prev;
    DenseMatrix d_joint;
    if (attention) d_joint = DenseMatrix(n, round.joint.cols());

    for (std::size_t m = 0; m < 2; ++m) {
      const RcaModalTrace& mt = round.modal[m];
      const ModalityWeights& w = p.modal[m];
      ModalityWeights& gw = g.modal[m];
      const DenseMatrix& d_out = dx[m];

      matmul_tn_acc(mt.x_in, d_out, gw.w_f);
      DenseMatrix d_x = matmul_nt(d_out, w.w_f);

      if (attention) {
        DenseMatrix d_pre = d_out;
        for (Index i = 0; i < d_pre.size(); ++i) {
          if (!(mt.refined_pre.data()[i] > 0.0)) d_pre.data()[i] = 0.0;
        }
        const DenseMatrix values_t = transpose(mt.values);
        const DenseMatrix anchors_t = transpose(mt.anchors);
        DenseMatrix d_values(n, mt.values.cols());
        DenseMatrix d_anchors(n, mt.anchors.cols());
        for (Index r0 = 0; r0 < n; r0 += block) {
          const Index r1 = std::min(n, r0 + block);
          const DenseMatrix c = trace.correlations_cached ? slice_rows(mt.correlation, r0, r1)
                                                          : correlation_block(mt.x_in, anchors_t, r0, r1);
          const DenseMatrix d_pre_block = slice_rows(d_pre, r0, r1);
          matmul_tn_acc(c, d_pre_block, d_values);
          DenseMatrix d_t = matmul(d_pre_block, values_t);
          for (Index q = 0; q < d_t.size(); ++q) {
            const double cv = c.data()[q];
            d_t.data()[q] *= 1.0 - cv * cv;
          }
          add_rows(d_x, r0, matmul(d_t, mt.anchors));
          matmul_tn_acc(d_t, slice_rows(mt.x_in, r0, r1), d_anchors);
        }
        matmul_tn_acc(mt.x_in, d_values, gw.w_a);
        axpy(d_x, matmul_nt(d_values, w.w_a));
        matmul_tn_acc(round.joint, d_anchors, gw.w_m);
        axpy(d_joint, matmul_nt(d_anchors, w.w_m));
      }
      dx_prev[m] = std::move(d_x);
    }

    if (attention) {
      const DenseMatrix e = hconcat(round.modal[kVisual].x_in, round.modal[kTextual].x_in);
      matmul_tn_acc(e, d_joint, g.w_tr);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d_joint.cols(); ++j) g.b_tr(0, j) += d_joint(i, j);
      const DenseMatrix d_e = matmul_nt(d_joint, p.w_tr);
      const Index d_lat = round.modal[kVisual].x_in.cols();
      axpy(dx_prev[kVisual], slice_cols(d_e, 0, d_lat));
      axpy(dx_prev[kTextual], slice_cols(d_e, d_lat, d_e.cols()));
    }
    dx = std::move(dx_prev);
  }
  return dx;
}

}  // namespace crane
