#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace rgtbot {

// Dense row-major matrix of doubles. Graph code stores one node per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* ptr(std::size_t r, std::size_t c) { return data_.data() + r * cols_ + c; }
  const double* ptr(std::size_t r, std::size_t c) const { return data_.data() + r * cols_ + c; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws std::invalid_argument if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
bool all_finite(const Matrix& m);

// a·bᵀ, the node-major affine product used by every layer.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a·b
Matrix matmul(const Matrix& a, const Matrix& b);
// out += aᵀ·b, used to accumulate weight gradients.
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);

// Adds `bias` (length cols) to every row.
void add_row_vector(Matrix& m, const Matrix& bias);
// Accumulates column sums into `out` (1 × cols).
void column_sums_acc(const Matrix& m, Matrix& out);

void axpy(double alpha, const Matrix& x, Matrix& y);
Matrix hadamard(const Matrix& a, const Matrix& b);
double frobenius_dot(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Columns of a and b side by side; rows must agree.
Matrix hconcat(const Matrix& a, const Matrix& b);
// Gathers the listed rows.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

}  // namespace rgtbot
