#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace crane {

using Index = std::size_t;

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(Index rows, Index cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(Index rows, Index cols, std::vector<double> values);

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseMatrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(Index r, Index c) { return values_[r * cols_ + c]; }
  double operator()(Index r, Index c) const { return values_[r * cols_ + c]; }

  std::span<double> row(Index r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(Index r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const DenseMatrix&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

// a * b
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

// out += a * b etc.; shapes must already agree.
void matmul_acc(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);
void matmul_tn_acc(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);

/// a += scale * b
void axpy(DenseMatrix& a, const DenseMatrix& b, double scale = 1.0);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scaled(const DenseMatrix& a, double s);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix hconcat(const DenseMatrix& left, const DenseMatrix& right);
DenseMatrix vconcat(const DenseMatrix& top, const DenseMatrix& bottom);
DenseMatrix slice_rows(const DenseMatrix& a, Index begin, Index end);
DenseMatrix slice_cols(const DenseMatrix& a, Index begin, Index end);

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace crane
