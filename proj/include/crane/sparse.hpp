#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crane/dense.hpp"
#include "crane/parallel.hpp"

namespace crane {

/// Compressed sparse row matrix in canonical form: column indices strictly
/// increase within each row. Values are stored as T; double is the working
/// precision and float exists for the benchmark's 32-bit storage mode.
template <typename T>
struct BasicCsr {
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<Index> row_offsets{0};
  std::vector<Index> col_indices;
  std::vector<T> values;

  Index nnz() const { return values.size(); }
  Index row_nnz(Index r) const { return row_offsets[r + 1] - row_offsets[r]; }

  /// Throws std::logic_error if any structural invariant is broken.
  void validate() const;

  /// Value at (r, c), or 0 if not stored.
  T at(Index r, Index c) const;

  std::size_t storage_bytes() const {
    return row_offsets.size() * sizeof(Index) + col_indices.size() * sizeof(Index) +
           values.size() * sizeof(T);
  }

  bool operator==(const BasicCsr&) const = default;
};

using CsrMatrix = BasicCsr<double>;
using CsrMatrixF32 = BasicCsr<float>;

enum class Axis { Row, Col };

/// Builds a canonical CSR matrix; duplicate (row, col) entries are summed.
CsrMatrix csr_from_triplets(std::span<const Index> rows, std::span<const Index> cols,
                            std::span<const double> vals, Index n_rows, Index n_cols);

/// Same as csr_from_triplets but every stored value is 1 and duplicates
/// collapse to a single entry.
CsrMatrix csr_pattern(std::span<const Index> rows, std::span<const Index> cols, Index n_rows,
                      Index n_cols);

DenseMatrix spmm(const CsrMatrix& sparse, const DenseMatrix& dense, const Parallelism& par = {});
DenseMatrix spmm(const CsrMatrixF32& sparse, const DenseMatrix& dense,
                 const Parallelism& par = {});
/// out += sparse * dense
void spmm_acc(const CsrMatrix& sparse, const DenseMatrix& dense, DenseMatrix& out,
              const Parallelism& par = {});

/// Structural nonzero count per row or per column.
std::vector<double> degree_vector(const CsrMatrix& m, Axis axis);

/// v(i,j) / sqrt(row_deg[i] * col_deg[j]).
CsrMatrix sym_normalize(const CsrMatrix& m, std::span<const double> row_deg,
                        std::span<const double> col_deg);

/// Divides each nonempty row by its sum. Rows summing to <= 1e-12 get uniform
/// weights over their stored support instead.
CsrMatrix row_normalize(const CsrMatrix& m);

/// Threshold below which row_normalize switches to uniform weights.
inline constexpr double kRowSumFloor = 1e-12;

CsrMatrix transpose(const CsrMatrix& m);
DenseMatrix to_dense(const CsrMatrix& m);
CsrMatrixF32 to_f32(const CsrMatrix& m);

}  // namespace crane
