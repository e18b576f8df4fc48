#pragma once

// Small dense row-major matrix and the symmetric eigen/Cholesky routines the
// embedding features need. Sized for d in the low hundreds.

#include <cstddef>
#include <span>
#include <vector>

namespace afv {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  static Matrix identity(std::size_t n);
  Matrix transpose() const;
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

struct EigenResult {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j is the eigenvector for values[j]
};

// Cyclic Jacobi rotations on a symmetric matrix.
EigenResult jacobi_eigen(const Matrix& symmetric, double tol = 1e-14, int max_sweeps = 100);

// Lower-triangular L with A = L L^T. Throws if A is not positive definite.
Matrix cholesky(const Matrix& a);

// Solves L x = b (forward) or L^T x = b (backward) for lower-triangular L.
std::vector<double> solve_lower(const Matrix& l, std::span<const double> b);
std::vector<double> solve_lower_transpose(const Matrix& l, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace afv
