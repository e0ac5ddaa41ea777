#include <doctest.h>

#include <cmath>
#include <vector>

#include "crane/dense.hpp"
#include "crane/sparse.hpp"
#include "toy.hpp"

using namespace crane;
using namespace crane::testing;

namespace {

// Dense accumulation of a triplet list, duplicates summed.
DenseMatrix dense_from_triplets(const std::vector<Index>& r, const std::vector<Index>& c,
                                const std::vector<double>& v, Index rows, Index cols) {
  DenseMatrix d(rows, cols);
  for (Index t = 0; t < r.size(); ++t) d(r[t], c[t]) += v[t];
  return d;
}

DenseMatrix dense_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("csr_from_triplets: singleton, empty and duplicates") {
  {
    const std::vector<Index> r{0}, c{0};
    const std::vector<double> v{1.0};
    const CsrMatrix m = csr_from_triplets(r, c, v, 1, 1);
    m.validate();
    CHECK(m.nnz() == 1);
    CHECK(m.at(0, 0) == 1.0);
  }
  {
    const CsrMatrix m = csr_from_triplets({}, {}, {}, 2, 3);
    m.validate();
    CHECK(m.nnz() == 0);
    CHECK(to_dense(m) == DenseMatrix(2, 3));
  }
  {
    const std::vector<Index> r{0, 0}, c{1, 1};
    const std::vector<double> v{1.0, 2.0};
    const CsrMatrix m = csr_from_triplets(r, c, v, 1, 2);
    CHECK(m.nnz() == 1);
    CHECK(m.at(0, 1) == 3.0);
  }
}

TEST_CASE("csr_from_triplets matches dense accumulation on random lists") {
  SeededRng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Index rows = 1 + rng.uniform_index(7);
    const Index cols = 1 + rng.uniform_index(7);
    std::vector<Index> r, c;
    std::vector<double> v;
    for (Index t = 0, n = rng.uniform_index(30); t < n; ++t) {
      r.push_back(rng.uniform_index(rows));
      c.push_back(rng.uniform_index(cols));
      v.push_back(rng.uniform(-1.0, 1.0));
    }
    const CsrMatrix m = csr_from_triplets(r, c, v, rows, cols);
    m.validate();
    CHECK(max_abs_diff(to_dense(m), dense_from_triplets(r, c, v, rows, cols)) < 1e-15);
  }
}

TEST_CASE("csr_from_triplets rejects out-of-range entries and ragged lists") {
  const std::vector<Index> r{0, 2}, c{0, 0};
  const std::vector<double> v{1.0, 1.0};
  CHECK_THROWS_AS(csr_from_triplets(r, c, v, 2, 2), std::out_of_range);
  const std::vector<double> short_v{1.0};
  CHECK_THROWS_AS(csr_from_triplets(r, c, short_v, 3, 2), std::invalid_argument);
}

TEST_CASE("validate catches broken invariants") {
  CsrMatrix m = csr_pattern(std::vector<Index>{0, 0}, std::vector<Index>{0, 1}, 1, 2);
  m.validate();
  std::swap(m.col_indices[0], m.col_indices[1]);
  CHECK_THROWS_AS(m.validate(), std::logic_error);
}

TEST_CASE("spmm: identity, zero and a hand example") {
  SeededRng rng(5);
  const DenseMatrix d = random_matrix(4, 3, rng);
  const std::vector<Index> diag{0, 1, 2, 3};
  const CsrMatrix eye = csr_pattern(diag, diag, 4, 4);
  CHECK(spmm(eye, d) == d);
  const CsrMatrix zero = csr_from_triplets({}, {}, {}, 4, 4);
  CHECK(spmm(zero, d) == DenseMatrix(4, 3));

  const std::vector<Index> r{0, 1}, c{1, 0};
  const std::vector<double> v{2.0, 1.0};
  const CsrMatrix a = csr_from_triplets(r, c, v, 2, 2);
  const DenseMatrix b = DenseMatrix::from_rows({{1.0}, {3.0}});
  CHECK(spmm(a, b) == DenseMatrix::from_rows({{6.0}, {1.0}}));
}

TEST_CASE("spmm matches a dense product and is thread-count invariant") {
  SeededRng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Index rows = 1 + rng.uniform_index(12);
    const Index inner = 1 + rng.uniform_index(12);
    std::vector<Index> r, c;
    std::vector<double> v;
    for (Index t = 0, n = rng.uniform_index(40); t < n; ++t) {
      r.push_back(rng.uniform_index(rows));
      c.push_back(rng.uniform_index(inner));
      v.push_back(rng.uniform(-2.0, 2.0));
    }
    const CsrMatrix a = csr_from_triplets(r, c, v, rows, inner);
    const DenseMatrix b = random_matrix(inner, 5, rng);
    const DenseMatrix serial = spmm(a, b);
    CHECK(max_abs_diff(serial, dense_matmul(to_dense(a), b)) < 1e-12);
    CHECK(spmm(a, b, Parallelism{false, 3}) == serial);
    CHECK(max_abs_diff(spmm(to_f32(a), b), serial) < 1e-5);
  }
  const CsrMatrix a = csr_from_triplets({}, {}, {}, 2, 3);
  CHECK_THROWS_AS(spmm(a, DenseMatrix(2, 2)), std::invalid_argument);
}

TEST_CASE("degree_vector") {
  const CsrMatrix one = csr_pattern(std::vector<Index>{0}, std::vector<Index>{0}, 1, 1);
  CHECK(degree_vector(one, Axis::Row) == std::vector<double>{1.0});
  const CsrMatrix empty = csr_from_triplets({}, {}, {}, 2, 3);
  CHECK(degree_vector(empty, Axis::Row) == std::vector<double>{0.0, 0.0});
  CHECK(degree_vector(empty, Axis::Col) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("sym_normalize: forced values and a dense oracle") {
  {
    const CsrMatrix m = csr_pattern(std::vector<Index>{0}, std::vector<Index>{0}, 1, 1);
    const std::vector<double> one{1.0};
    CHECK(sym_normalize(m, one, one).values[0] == 1.0);
    const std::vector<double> du{4.0}, di{9.0};
    CHECK(sym_normalize(m, du, di).values[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  }
  SeededRng rng(21);
  std::vector<Index> r, c;
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j)
      if (rng.uniform() < 0.5 || i == j) {
        r.push_back(i);
        c.push_back(j);
      }
  const CsrMatrix a = csr_pattern(r, c, 5, 5);
  const auto dr = degree_vector(a, Axis::Row);
  const auto dc = degree_vector(a, Axis::Col);
  const DenseMatrix got = to_dense(sym_normalize(a, dr, dc));
  const DenseMatrix dense = to_dense(a);
  DenseMatrix oracle(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) oracle(i, j) = dense(i, j) / std::sqrt(dr[i]) / std::sqrt(dc[j]);
  CHECK(max_abs_diff(got, oracle) < 1e-12);

  const std::vector<double> zero{0.0};
  const CsrMatrix single = csr_pattern(std::vector<Index>{0}, std::vector<Index>{0}, 1, 1);
  CHECK_THROWS_AS(sym_normalize(single, zero, zero), std::domain_error);
}

TEST_CASE("row_normalize") {
  auto row = [](std::vector<double> v) {
    std::vector<Index> r(v.size(), 0), c(v.size());
    for (Index j = 0; j < v.size(); ++j) c[j] = j;
    return row_normalize(csr_from_triplets(r, c, v, 1, v.size())).values;
  };
  CHECK(row({2.0, 2.0}) == std::vector<double>{0.5, 0.5});
  CHECK(row({1.0}) == std::vector<double>{1.0});
  const auto signed_row = row({0.6, -0.2});
  CHECK(signed_row[0] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(signed_row[1] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(signed_row[0] + signed_row[1] == doctest::Approx(1.0).epsilon(1e-14));
  // Non-positive sums fall back to uniform weights.
  CHECK(row({0.5, -0.5}) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("transpose is an involution matching the dense transpose") {
  SeededRng rng(4);
  std::vector<Index> r, c;
  std::vector<double> v;
  for (int t = 0; t < 25; ++t) {
    r.push_back(rng.uniform_index(6));
    c.push_back(rng.uniform_index(4));
    v.push_back(rng.uniform());
  }
  const CsrMatrix a = csr_from_triplets(r, c, v, 6, 4);
  const CsrMatrix t = transpose(a);
  t.validate();
  CHECK(to_dense(t) == transpose(to_dense(a)));
  CHECK(to_dense(transpose(t)) == to_dense(a));
}

TEST_CASE("dense kernels agree with the triple loop") {
  SeededRng rng(6);
  const DenseMatrix a = random_matrix(5, 4, rng);
  const DenseMatrix b = random_matrix(4, 3, rng);
  const DenseMatrix c = random_matrix(5, 3, rng);
  CHECK(max_abs_diff(matmul(a, b), dense_matmul(a, b)) < 1e-14);
  CHECK(max_abs_diff(matmul_tn(a, c), dense_matmul(transpose(a), c)) < 1e-14);
  CHECK(max_abs_diff(matmul_nt(a, transpose(b)), dense_matmul(a, b)) < 1e-14);
  CHECK(hconcat(slice_cols(a, 0, 2), slice_cols(a, 2, 4)) == a);
  CHECK(vconcat(slice_rows(a, 0, 1), slice_rows(a, 1, 5)) == a);
  CHECK_THROWS(matmul(a, a));
}
