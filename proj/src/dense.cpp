#include "crane/dense.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace crane {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

}  // namespace

DenseMatrix::DenseMatrix(Index rows, Index cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("DenseMatrix: value count does not match shape");
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = rows.size();
  const Index c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("DenseMatrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(values));
}

DenseMatrix DenseMatrix::identity(Index n) {
  DenseMatrix m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool DenseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

void matmul_acc(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  require(a.cols() == b.rows() && out.rows() == a.rows() && out.cols() == b.cols(), "matmul");
  const Index inner = a.cols();
  const Index n = b.cols();
  for (Index i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    const double* arow = a.row(i).data();
    for (Index k = 0; k < inner; ++k) {
      const double s = arow[k];
      if (s == 0.0) continue;
      const double* brow = b.row(k).data();
      for (Index j = 0; j < n; ++j) o[j] += s * brow[j];
    }
  }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "matmul");
  DenseMatrix out(a.rows(), b.cols());
  matmul_acc(a, b, out);
  return out;
}

void matmul_tn_acc(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  require(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols(), "matmul_tn");
  const Index n = b.cols();
  for (Index k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k).data();
    const double* brow = b.row(k).data();
    for (Index i = 0; i < a.cols(); ++i) {
      const double s = arow[i];
      if (s == 0.0) continue;
      double* o = out.row(i).data();
      for (Index j = 0; j < n; ++j) o[j] += s * brow[j];
    }
  }
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), "matmul_tn");
  DenseMatrix out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.cols(), "matmul_nt");
  DenseMatrix out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    double* o = out.row(i).data();
    for (Index j = 0; j < b.rows(); ++j) o[j] = dot(arow, b.row(j));
  }
  return out;
}

void axpy(DenseMatrix& a, const DenseMatrix& b, double scale) {
  require(a.same_shape(b), "axpy");
  auto av = a.data();
  const auto bv = b.data();
  for (Index i = 0; i < av.size(); ++i) av[i] += scale * bv[i];
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out = a;
  axpy(out, b);
  return out;
}

DenseMatrix scaled(const DenseMatrix& a, double s) {
  DenseMatrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

DenseMatrix hconcat(const DenseMatrix& left, const DenseMatrix& right) {
  require(left.rows() == right.rows(), "hconcat");
  DenseMatrix out(left.rows(), left.cols() + right.cols());
  for (Index i = 0; i < left.rows(); ++i) {
    std::copy(left.row(i).begin(), left.row(i).end(), out.row(i).begin());
    std::copy(right.row(i).begin(), right.row(i).end(), out.row(i).begin() + left.cols());
  }
  return out;
}

DenseMatrix vconcat(const DenseMatrix& top, const DenseMatrix& bottom) {
  require(top.cols() == bottom.cols(), "vconcat");
  std::vector<double> values(top.values());
  values.insert(values.end(), bottom.values().begin(), bottom.values().end());
  return DenseMatrix(top.rows() + bottom.rows(), top.cols(), std::move(values));
}

DenseMatrix slice_rows(const DenseMatrix& a, Index begin, Index end) {
  require(begin <= end && end <= a.rows(), "slice_rows");
  std::vector<double> values(a.values().begin() + begin * a.cols(),
                             a.values().begin() + end * a.cols());
  return DenseMatrix(end - begin, a.cols(), std::move(values));
}

DenseMatrix slice_cols(const DenseMatrix& a, Index begin, Index end) {
  require(begin <= end && end <= a.cols(), "slice_cols");
  DenseMatrix out(a.rows(), end - begin);
  for (Index i = 0; i < a.rows(); ++i)
    std::copy(a.row(i).begin() + begin, a.row(i).begin() + end, out.row(i).begin());
  return out;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "max_abs_diff");
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace crane
