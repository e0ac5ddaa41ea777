#include "crane/params.hpp"

#include <cmath>

namespace crane {

std::vector<std::pair<std::string, DenseMatrix*>> named_tensors(ParameterTensors& p) {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  p.for_each([&out](const std::string& name, DenseMatrix& m) { out.emplace_back(name, &m); });
  return out;
}

std::vector<std::pair<std::string, const DenseMatrix*>> named_tensors(const ParameterTensors& p) {
  std::vector<std::pair<std::string, const DenseMatrix*>> out;
  p.for_each([&out](const std::string& name, const DenseMatrix& m) { out.emplace_back(name, &m); });
  return out;
}

GradientSet zeros_like(const ParameterTensors& p) {
  GradientSet g;
  g.id_emb = DenseMatrix(p.id_emb.rows(), p.id_emb.cols());
  g.proj_v = DenseMatrix(p.proj_v.rows(), p.proj_v.cols());
  g.proj_t = DenseMatrix(p.proj_t.rows(), p.proj_t.cols());
  g.w_tr = DenseMatrix(p.w_tr.rows(), p.w_tr.cols());
  g.b_tr = DenseMatrix(p.b_tr.rows(), p.b_tr.cols());
  for (std::size_t m = 0; m < 2; ++m) {
    const auto& src = p.modal[m];
    auto& dst = g.modal[m];
    dst.w_m = DenseMatrix(src.w_m.rows(), src.w_m.cols());
    dst.w_a = DenseMatrix(src.w_a.rows(), src.w_a.cols());
    dst.w_f = DenseMatrix(src.w_f.rows(), src.w_f.cols());
    dst.attention = DenseMatrix(src.attention.rows(), src.attention.cols());
  }
  for (const auto& w : p.w_gcn) g.w_gcn.emplace_back(w.rows(), w.cols());
  return g;
}

bool is_decayed_weight(const std::string& name) { return name != "id_emb" && name != "b_tr"; }

ModelDims dims_for(const TrainConfig& cfg, Index n_users, Index n_items, Index d_v, Index d_t) {
  ModelDims dims;
  dims.n_users = n_users;
  dims.n_items = n_items;
  dims.d = cfg.d;
  dims.d_lat = cfg.d_lat;
  dims.d_joint = cfg.d_joint;
  dims.d_v = d_v;
  dims.d_t = d_t;
  dims.gcn_layers = cfg.trainable_gcn ? cfg.L_ui : 0;
  dims.attention_aggregation = cfg.aggregation == Aggregation::Attention;
  return dims;
}

void xavier_uniform(DenseMatrix& m, SeededRng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
}

ModelParameters init_params(const ModelDims& dims, SeededRng& rng) {
  ModelParameters p;
  p.id_emb = DenseMatrix(dims.n_users + dims.n_items, dims.d);
  p.proj_v = DenseMatrix(dims.d_v, dims.d_lat);
  p.proj_t = DenseMatrix(dims.d_t, dims.d_lat);
  p.w_tr = DenseMatrix(2 * dims.d_lat, dims.d_joint);
  p.b_tr = DenseMatrix(1, dims.d_joint);
  for (auto& mw : p.modal) {
    mw.w_m = DenseMatrix(dims.d_joint, dims.d_lat);
    mw.w_a = DenseMatrix(dims.d_lat, dims.d_lat);
    mw.w_f = DenseMatrix(dims.d_lat, dims.d_lat);
    if (dims.attention_aggregation) mw.attention = DenseMatrix(1, dims.d_lat);
  }
  for (Index l = 0; l < dims.gcn_layers; ++l) p.w_gcn.emplace_back(dims.d, dims.d);

  p.for_each([&rng](const std::string& name, DenseMatrix& m) {
    if (name != "b_tr") xavier_uniform(m, rng);
  });
  return p;
}

}  // namespace crane
