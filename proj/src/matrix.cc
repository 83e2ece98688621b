#include "rgtbot/matrix.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rgtbot {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data length does not match rows*cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!all_finite(m)) {
    throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data().data() + i * k;
    double* orow = out.data().data() + i * b.rows();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.data().data() + j * k;
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += ar[t] * br[t];
      orow[j] = s;
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.data().data() + i * n;
    for (std::size_t t = 0; t < a.cols(); ++t) {
      const double av = a(i, t);
      if (av == 0.0) continue;
      const double* br = b.data().data() + t * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
    }
  }
  return out;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.rows() == b.rows(), "matmul_tn_acc: row counts differ");
  require(out.rows() == a.cols() && out.cols() == b.cols(), "matmul_tn_acc: output shape");
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* brow = b.data().data() + r * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(r, i);
      if (av == 0.0) continue;
      double* orow = out.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void add_row_vector(Matrix& m, const Matrix& bias) {
  require(bias.size() == m.cols(), "add_row_vector: bias length");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias[j];
  }
}

void column_sums_acc(const Matrix& m, Matrix& out) {
  require(out.size() == m.cols(), "column_sums_acc: output length");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += r[j];
  }
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  require(x.same_shape(y), "axpy: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "frobenius_dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "hconcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), o.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), o.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < m.rows(), "select_rows: row index out of range");
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace rgtbot
