#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crane/config.hpp"
#include "crane/dense.hpp"
#include "crane/rng.hpp"

namespace crane {

enum Modality : std::size_t { kVisual = 0, kTextual = 1 };
inline constexpr std::array<const char*, 2> kModalityTags{"v", "t"};

struct ModalityWeights {
  DenseMatrix w_m;        // d_joint x d_lat, joint space -> modality anchors
  DenseMatrix w_a;        // d_lat x d_lat, refinement
  DenseMatrix w_f;        // d_lat x d_lat, residual transform
  DenseMatrix attention;  // 1 x d_lat; only with attention aggregation
};

/// Every trainable tensor, stored so the optimiser, the L2 term, the gradient
/// checker and the checkpoint writer can all walk them in one fixed order.
struct ParameterTensors {
  DenseMatrix id_emb;  // (M+N) x d, users first
  DenseMatrix proj_v;  // d_v x d_lat
  DenseMatrix proj_t;  // d_t x d_lat
  DenseMatrix w_tr;    // 2*d_lat x d_joint
  DenseMatrix b_tr;    // 1 x d_joint
  std::array<ModalityWeights, 2> modal;
  std::vector<DenseMatrix> w_gcn;  // one d x d per UI layer when trainable

  /// Calls fn(name, tensor) for every non-empty tensor.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    auto call = [&fn](const std::string& name, auto& m) {
      if (!m.empty()) fn(name, m);
    };
    call("id_emb", self.id_emb);
    call("proj_v", self.proj_v);
    call("proj_t", self.proj_t);
    call("w_tr", self.w_tr);
    call("b_tr", self.b_tr);
    for (std::size_t m = 0; m < 2; ++m) {
      const std::string tag = kModalityTags[m];
      call("w_m." + tag, self.modal[m].w_m);
      call("w_a." + tag, self.modal[m].w_a);
      call("w_f." + tag, self.modal[m].w_f);
      call("attention." + tag, self.modal[m].attention);
    }
    for (std::size_t l = 0; l < self.w_gcn.size(); ++l)
      call("w_gcn." + std::to_string(l), self.w_gcn[l]);
  }
};

struct ModelParameters : ParameterTensors {
  /// Bumped by every optimiser step; traces remember the version they saw.
  std::uint64_t version = 0;
};

struct GradientSet : ParameterTensors {};

/// (name, tensor) pairs in for_each order.
std::vector<std::pair<std::string, DenseMatrix*>> named_tensors(ParameterTensors& p);
std::vector<std::pair<std::string, const DenseMatrix*>> named_tensors(const ParameterTensors& p);

/// Zero tensors with the shapes of p.
GradientSet zeros_like(const ParameterTensors& p);

/// True for tensors covered by the full weight decay (everything except the
/// ID embeddings, which decay batch-wise, and the bias).
bool is_decayed_weight(const std::string& name);

struct ModelDims {
  Index n_users = 0;
  Index n_items = 0;
  Index d = 64;
  Index d_lat = 64;
  Index d_joint = 64;
  Index d_v = 0;
  Index d_t = 0;
  Index gcn_layers = 0;  // trainable UI-GCN weights, 0 when disabled
  bool attention_aggregation = false;
};

ModelDims dims_for(const TrainConfig& cfg, Index n_users, Index n_items, Index d_v, Index d_t);

/// Xavier-uniform initialisation, bound sqrt(6 / (fan_in + fan_out)); b_tr = 0.
ModelParameters init_params(const ModelDims& dims, SeededRng& rng);

void xavier_uniform(DenseMatrix& m, SeededRng& rng);

}  // namespace crane
