#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "crane/training.hpp"
#include "toy.hpp"

using namespace crane;
using namespace crane::testing;

TEST_CASE("sampling: the only negative is forced") {
  const std::vector<Interaction> pairs{{0, 0}};
  const InteractionGraph g = build_interaction_graph(pairs, 1, 2);
  SeededRng rng(1);
  const TripletBatch b = sample_triplets(g, 50, rng);
  CHECK(b.size() == 50);
  for (Index x = 0; x < 50; ++x) {
    CHECK(b.users[x] == 0);
    CHECK(b.pos_items[x] == 0);
    CHECK(b.neg_items[x] == 1);
  }
  CHECK(default_config("baby").batch_size == 1024);
}

TEST_CASE("sampling frequencies are uniform") {
  // User 0 has seen item 0; items 1 and 2 are the candidate negatives.
  const std::vector<Interaction> pairs{{0, 0}, {1, 1}, {1, 2}};
  const InteractionGraph g = build_interaction_graph(pairs, 2, 3);
  SeededRng rng(2);
  Index user0 = 0, neg1 = 0, edges = 0;
  for (int round = 0; round < 100; ++round) {
    const TripletBatch b = sample_triplets(g, 1000, rng);
    for (Index x = 0; x < b.size(); ++x) {
      ++edges;
      if (b.users[x] != 0) {
        CHECK(b.neg_items[x] == 0);
        continue;
      }
      ++user0;
      if (b.neg_items[x] == 1) ++neg1;
    }
  }
  CHECK(edges == 100000);
  // Positives are uniform over the three edges.
  CHECK(std::abs(user0 / double(edges) - 1.0 / 3.0) < 0.01);
  CHECK(std::abs(neg1 / double(user0) - 0.5) < 0.01);
}

TEST_CASE("sampling fails when a user has seen every item") {
  const std::vector<Interaction> pairs{{0, 0}, {0, 1}};
  const InteractionGraph g = build_interaction_graph(pairs, 1, 2);
  SeededRng rng(3);
  CHECK_THROWS(sample_triplets(g, 4, rng));
}

TEST_CASE("BPR closed forms") {
  const std::vector<double> zero{0.0};
  CHECK(std::abs(bpr_loss(zero, zero) - std::log(2.0)) < 1e-12);
  const std::vector<double> one{1.0};
  CHECK(std::abs(bpr_loss(one, zero) - std::log1p(std::exp(-1.0))) < 1e-15);
  CHECK(bpr_loss(one, zero) == doctest::Approx(0.313262).epsilon(1e-6));
  const std::vector<double> big{800.0};
  CHECK(bpr_loss(big, zero) < 1e-300);
  CHECK(std::isfinite(bpr_loss(zero, big)));
  CHECK(bpr_loss(zero, big) == doctest::Approx(800.0));
  const std::vector<double> three{0.0, 0.0, 0.0};
  CHECK(std::abs(bpr_loss(three, three) - 3.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("InfoNCE closed forms") {
  SeededRng rng(4);
  const DenseMatrix a = random_matrix(4, 3, rng);
  const DenseMatrix b = random_matrix(4, 3, rng);
  const std::vector<Index> single{2};
  CHECK(infonce_loss(a, b, 0.6, single) == 0.0);

  const DenseMatrix same(5, 3, 1.0);
  const std::vector<Index> all{0, 1, 2, 3, 4};
  CHECK(std::abs(infonce_loss(same, same, 0.6, all) - 5.0 * std::log(5.0)) < 1e-9);

  const DenseMatrix eye = DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  const std::vector<Index> two{0, 1};
  const double l = infonce_loss(eye, eye, 1.0, two);
  CHECK(std::abs(l - 2.0 * std::log1p(std::exp(-1.0))) < 1e-12);
  CHECK(l == doctest::Approx(0.626524).epsilon(1e-6));
}

TEST_CASE("loss reduces to BPR with beta = lambda = 0") {
  const ToyInstance t = make_toy(toy_config());
  const ForwardTrace tr = forward(t.params, t.structures.front(), t.inputs());
  const LossBreakdown lb = loss_breakdown(tr, t.batch, LossWeights{0.0, 0.0, 0.5}, t.params);
  CHECK(lb.total == lb.bpr);
}

TEST_CASE("total loss equals independently computed components") {
  const ToyInstance t = make_toy(toy_config());
  const ForwardTrace tr = forward(t.params, t.structures.front(), t.inputs());
  const Index m = 5;
  const Index n = 8;

  double bpr = 0.0;
  for (Index x = 0; x < t.batch.size(); ++x) {
    const Index u = t.batch.users[x];
    double margin = 0.0;
    for (Index c = 0; c < tr.z.cols(); ++c)
      margin += tr.z(u, c) * (tr.z(m + t.batch.pos_items[x], c) - tr.z(m + t.batch.neg_items[x], c));
    bpr += std::log1p(std::exp(-margin));
  }

  // Cosine InfoNCE written out per anchor row.
  auto nce = [&](const DenseMatrix& a, const DenseMatrix& b, const std::set<Index>& rows) {
    auto cos = [](std::span<const double> x, std::span<const double> y) {
      return dot(x, y) / std::sqrt(dot(x, x) * dot(y, y));
    };
    double total = 0.0;
    for (Index i : rows) {
      double denom = 0.0;
      for (Index j : rows) denom += std::exp(cos(a.row(i), b.row(j)) / t.weights.tau);
      total += -std::log(std::exp(cos(a.row(i), b.row(i)) / t.weights.tau) / denom);
    }
    return total;
  };
  const std::set<Index> users(t.batch.users.begin(), t.batch.users.end());
  const std::set<Index> items(t.batch.pos_items.begin(), t.batch.pos_items.end());
  const double cl = nce(slice_rows(tr.e, 0, m), tr.h_users, users) +
                    nce(slice_rows(tr.e, m, m + n), tr.h_items, items);

  std::set<Index> rows(users);
  for (Index i : t.batch.pos_items) rows.insert(m + i);
  for (Index i : t.batch.neg_items) rows.insert(m + i);
  double l2 = 0.0;
  for (Index r : rows) l2 += squared_norm(t.params.id_emb.row(r));
  for (const auto& [name, tensor] : named_tensors(t.params))
    if (name != "id_emb" && name != "b_tr") l2 += squared_norm(tensor->data());

  const double want = bpr + t.weights.beta * cl + t.weights.lambda * l2;
  CHECK(std::abs(total_loss(tr, t.batch, t.weights, t.params) - want) < 1e-12);
}

TEST_CASE("zero learning signal gives zero gradients") {
  const ToyInstance t = make_toy(toy_config());
  const ForwardTrace tr = forward(t.params, t.structures.front(), t.inputs());
  const GradientSet g = backward_pass(tr, TripletBatch{}, LossWeights{0.0, 0.0, 0.5}, t.params);
  for (const auto& [name, tensor] : named_tensors(g)) {
    INFO(name);
    CHECK(*tensor == DenseMatrix(tensor->rows(), tensor->cols()));
  }
}

TEST_CASE("weight decay alone gives 2 lambda theta on the decayed tensors") {
  const ToyInstance t = make_toy(toy_config());
  const ForwardTrace tr = forward(t.params, t.structures.front(), t.inputs());
  const double lambda = 0.3;
  const GradientSet g = backward_pass(tr, TripletBatch{}, LossWeights{0.0, lambda, 0.5}, t.params);
  const auto params = named_tensors(t.params);
  const auto grads = named_tensors(g);
  for (Index q = 0; q < params.size(); ++q) {
    INFO(params[q].first);
    const bool decayed = params[q].first != "id_emb" && params[q].first != "b_tr";
    CHECK(max_abs_diff(*grads[q].second, scaled(*params[q].second, decayed ? 2.0 * lambda : 0.0)) <
          1e-15);
  }
}

TEST_CASE("backward pass refuses a stale trace") {
  ToyInstance t = make_toy(toy_config());
  const ForwardTrace tr = forward(t.params, t.structures.front(), t.inputs());
  ++t.params.version;
  CHECK_THROWS_AS(backward_pass(tr, t.batch, t.weights, t.params), std::runtime_error);
}

TEST_CASE("finite differences") {
  CHECK(std::abs(finite_diff_grad([](double d) { return (3.0 + d) * (3.0 + d); }, 1e-5) - 6.0) <
        1e-6);
  CHECK(std::abs(finite_diff_grad([](double d) { return 2.5 * d - 1.0; }, 1e-3) - 2.5) < 1e-12);
}

namespace {

ModelParameters bowl_params() {
  ModelParameters p;
  p.w_tr = DenseMatrix::from_rows({{1.0, -2.0, 0.5}, {3.0, 0.0, -0.25}});
  p.b_tr = DenseMatrix::from_rows({{0.1, -0.4, 2.0}});
  return p;
}

}  // namespace

TEST_CASE("Adam: zero gradient leaves parameters unchanged") {
  ModelParameters p = bowl_params();
  const ModelParameters before = p;
  AdamState s = adam_state_for(p);
  adam_step(p, zeros_like(p), s, 0.1);
  CHECK(p.w_tr == before.w_tr);
  CHECK(p.b_tr == before.b_tr);
  CHECK(p.version == 1);
}

TEST_CASE("Adam: first step moves by lr times the gradient sign") {
  ModelParameters p = bowl_params();
  const ModelParameters before = p;
  AdamState s = adam_state_for(p);
  GradientSet g = zeros_like(p);
  g.w_tr = DenseMatrix::from_rows({{3.0, -0.5, 10.0}, {-7.0, 1.0, 0.2}});
  g.b_tr = DenseMatrix::from_rows({{1.0, -1.0, 4.0}});
  adam_step(p, g, s, 0.01);
  for (Index x = 0; x < 6; ++x) {
    const double sign = g.w_tr.data()[x] > 0 ? 1.0 : -1.0;
    CHECK(std::abs(p.w_tr.data()[x] - (before.w_tr.data()[x] - 0.01 * sign)) < 1e-8);
  }
}

TEST_CASE("Adam: 100 steps on a quadratic bowl match a reference implementation") {
  ModelParameters p = bowl_params();
  AdamState s = adam_state_for(p);
  const std::vector<double> curvature{1.0, 4.0, 0.5, 2.0, 9.0, 0.1, 3.0, 0.7, 1.5};

  // Reference over the same nine scalars, in for_each order (w_tr then b_tr).
  std::vector<double> theta;
  for (double v : p.w_tr.data()) theta.push_back(v);
  for (double v : p.b_tr.data()) theta.push_back(v);
  std::vector<double> m(9, 0.0), v(9, 0.0);
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;

  for (int step = 1; step <= 100; ++step) {
    GradientSet g = zeros_like(p);
    for (Index x = 0; x < 6; ++x) g.w_tr.data()[x] = 2.0 * curvature[x] * p.w_tr.data()[x];
    for (Index x = 0; x < 3; ++x) g.b_tr.data()[x] = 2.0 * curvature[6 + x] * p.b_tr.data()[x];
    adam_step(p, g, s, lr);

    for (Index x = 0; x < 9; ++x) {
      const double grad = 2.0 * curvature[x] * theta[x];
      m[x] = b1 * m[x] + (1 - b1) * grad;
      v[x] = b2 * v[x] + (1 - b2) * grad * grad;
      const double mh = m[x] / (1 - std::pow(b1, step));
      const double vh = v[x] / (1 - std::pow(b2, step));
      theta[x] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  for (Index x = 0; x < 6; ++x) CHECK(std::abs(p.w_tr.data()[x] - theta[x]) < 1e-10);
  for (Index x = 0; x < 3; ++x) CHECK(std::abs(p.b_tr.data()[x] - theta[6 + x]) < 1e-10);
  CHECK(s.step_count == 100);
  CHECK(p.version == 100);
}

TEST_CASE("Adam rejects non-finite gradients") {
  ModelParameters p = bowl_params();
  AdamState s = adam_state_for(p);
  GradientSet g = zeros_like(p);
  g.b_tr(0, 1) = NAN;
  CHECK_THROWS_AS(adam_step(p, g, s, 0.1), std::runtime_error);
}
