#include "crane/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace crane {

template <typename T>
void BasicCsr<T>::validate() const {
  auto fail = [](const std::string& what) { throw std::logic_error("csr invariant: " + what); };
  if (row_offsets.size() != n_rows + 1) fail("row_offsets length");
  if (row_offsets.front() != 0) fail("row_offsets[0] != 0");
  if (row_offsets.back() != values.size() || col_indices.size() != values.size())
    fail("row_offsets[n_rows] != nnz");
  for (Index r = 0; r < n_rows; ++r) {
    if (row_offsets[r] > row_offsets[r + 1]) fail("row_offsets decreasing");
    for (Index p = row_offsets[r]; p < row_offsets[r + 1]; ++p) {
      if (col_indices[p] >= n_cols) fail("column index out of range");
      if (p > row_offsets[r] && col_indices[p] <= col_indices[p - 1])
        fail("columns not strictly increasing");
    }
  }
}

template <typename T>
T BasicCsr<T>::at(Index r, Index c) const {
  const auto first = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[r]);
  const auto last = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return T{0};
  return values[static_cast<Index>(it - col_indices.begin())];
}

template struct BasicCsr<double>;
template struct BasicCsr<float>;

namespace {

CsrMatrix assemble(std::span<const Index> rows, std::span<const Index> cols,
                   std::span<const double> vals, Index n_rows, Index n_cols, bool pattern) {
  if (rows.size() != cols.size() || (!pattern && rows.size() != vals.size())) {
    throw std::invalid_argument("csr_from_triplets: triplet lists differ in length");
  }
  for (Index t = 0; t < rows.size(); ++t) {
    if (rows[t] >= n_rows || cols[t] >= n_cols) {
      std::ostringstream msg;
      msg << "csr_from_triplets: entry " << t << " at (" << rows[t] << ", " << cols[t]
          << ") outside shape (" << n_rows << ", " << n_cols << ")";
      throw std::out_of_range(msg.str());
    }
  }
  std::vector<Index> order(rows.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return rows[a] != rows[b] ? rows[a] < rows[b] : cols[a] < cols[b];
  });

  CsrMatrix m;
  m.n_rows = n_rows;
  m.n_cols = n_cols;
  m.row_offsets.assign(n_rows + 1, 0);
  for (Index t : order) {
    // Entries arrive row-major, so a duplicate is always the last stored one.
    if (m.row_offsets[rows[t] + 1] > 0 && m.col_indices.back() == cols[t]) {
      if (!pattern) m.values.back() += vals[t];
      continue;
    }
    m.col_indices.push_back(cols[t]);
    m.values.push_back(pattern ? 1.0 : vals[t]);
    ++m.row_offsets[rows[t] + 1];
  }
  for (Index r = 0; r < n_rows; ++r) m.row_offsets[r + 1] += m.row_offsets[r];
  return m;
}

template <typename T>
void spmm_rows(const BasicCsr<T>& a, const DenseMatrix& b, DenseMatrix& out, Index begin,
               Index end) {
  const Index n = b.cols();
  for (Index r = begin; r < end; ++r) {
    double* o = out.row(r).data();
    for (Index p = a.row_offsets[r]; p < a.row_offsets[r + 1]; ++p) {
      const double v = static_cast<double>(a.values[p]);
      const double* brow = b.row(a.col_indices[p]).data();
      for (Index j = 0; j < n; ++j) o[j] += v * brow[j];
    }
  }
}

template <typename T>
DenseMatrix spmm_impl(const BasicCsr<T>& a, const DenseMatrix& b, const Parallelism& par) {
  if (a.n_cols != b.rows()) {
    throw std::invalid_argument("spmm: sparse has " + std::to_string(a.n_cols) +
                                " columns but dense has " + std::to_string(b.rows()) + " rows");
  }
  DenseMatrix out(a.n_rows, b.cols());
  parallel_for(a.n_rows, par, [&](Index begin, Index end) { spmm_rows(a, b, out, begin, end); });
  return out;
}

}  // namespace

CsrMatrix csr_from_triplets(std::span<const Index> rows, std::span<const Index> cols,
                            std::span<const double> vals, Index n_rows, Index n_cols) {
  return assemble(rows, cols, vals, n_rows, n_cols, false);
}

CsrMatrix csr_pattern(std::span<const Index> rows, std::span<const Index> cols, Index n_rows,
                      Index n_cols) {
  return assemble(rows, cols, {}, n_rows, n_cols, true);
}

DenseMatrix spmm(const CsrMatrix& sparse, const DenseMatrix& dense, const Parallelism& par) {
  return spmm_impl(sparse, dense, par);
}

DenseMatrix spmm(const CsrMatrixF32& sparse, const DenseMatrix& dense, const Parallelism& par) {
  return spmm_impl(sparse, dense, par);
}

void spmm_acc(const CsrMatrix& sparse, const DenseMatrix& dense, DenseMatrix& out,
              const Parallelism& par) {
  if (sparse.n_cols != dense.rows() || out.rows() != sparse.n_rows ||
      out.cols() != dense.cols()) {
    throw std::invalid_argument("spmm_acc: shape mismatch");
  }
  parallel_for(sparse.n_rows, par,
               [&](Index begin, Index end) { spmm_rows(sparse, dense, out, begin, end); });
}

std::vector<double> degree_vector(const CsrMatrix& m, Axis axis) {
  if (axis == Axis::Row) {
    std::vector<double> deg(m.n_rows);
    for (Index r = 0; r < m.n_rows; ++r) deg[r] = static_cast<double>(m.row_nnz(r));
    return deg;
  }
  std::vector<double> deg(m.n_cols, 0.0);
  for (Index c : m.col_indices) deg[c] += 1.0;
  return deg;
}

CsrMatrix sym_normalize(const CsrMatrix& m, std::span<const double> row_deg,
                        std::span<const double> col_deg) {
  if (row_deg.size() != m.n_rows || col_deg.size() != m.n_cols) {
    throw std::invalid_argument("sym_normalize: degree vector length mismatch");
  }
  CsrMatrix out = m;
  for (Index r = 0; r < m.n_rows; ++r) {
    for (Index p = m.row_offsets[r]; p < m.row_offsets[r + 1]; ++p) {
      const Index c = m.col_indices[p];
      if (!(row_deg[r] > 0.0) || !(col_deg[c] > 0.0)) {
        throw std::domain_error("sym_normalize: zero degree at populated entry (" +
                                std::to_string(r) + ", " + std::to_string(c) + ")");
      }
      out.values[p] = m.values[p] / std::sqrt(row_deg[r] * col_deg[c]);
    }
  }
  return out;
}

CsrMatrix row_normalize(const CsrMatrix& m) {
  CsrMatrix out = m;
  for (Index r = 0; r < m.n_rows; ++r) {
    const Index begin = m.row_offsets[r];
    const Index end = m.row_offsets[r + 1];
    if (begin == end) continue;
    double sum = 0.0;
    for (Index p = begin; p < end; ++p) sum += m.values[p];
    if (sum <= kRowSumFloor) {
      const double uniform = 1.0 / static_cast<double>(end - begin);
      for (Index p = begin; p < end; ++p) out.values[p] = uniform;
    } else {
      for (Index p = begin; p < end; ++p) out.values[p] = m.values[p] / sum;
    }
  }
  return out;
}

CsrMatrix transpose(const CsrMatrix& m) {
  CsrMatrix t;
  t.n_rows = m.n_cols;
  t.n_cols = m.n_rows;
  t.row_offsets.assign(m.n_cols + 1, 0);
  for (Index c : m.col_indices) ++t.row_offsets[c + 1];
  for (Index r = 0; r < t.n_rows; ++r) t.row_offsets[r + 1] += t.row_offsets[r];
  t.col_indices.resize(m.nnz());
  t.values.resize(m.nnz());
  std::vector<Index> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
  for (Index r = 0; r < m.n_rows; ++r) {
    for (Index p = m.row_offsets[r]; p < m.row_offsets[r + 1]; ++p) {
      const Index dst = cursor[m.col_indices[p]]++;
      t.col_indices[dst] = r;
      t.values[dst] = m.values[p];
    }
  }
  return t;
}

DenseMatrix to_dense(const CsrMatrix& m) {
  DenseMatrix d(m.n_rows, m.n_cols);
  for (Index r = 0; r < m.n_rows; ++r)
    for (Index p = m.row_offsets[r]; p < m.row_offsets[r + 1]; ++p)
      d(r, m.col_indices[p]) += m.values[p];
  return d;
}

CsrMatrixF32 to_f32(const CsrMatrix& m) {
  CsrMatrixF32 out;
  out.n_rows = m.n_rows;
  out.n_cols = m.n_cols;
  out.row_offsets = m.row_offsets;
  out.col_indices = m.col_indices;
  out.values.assign(m.values.begin(), m.values.end());
  return out;
}

}  // namespace crane
