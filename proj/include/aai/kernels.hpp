#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace aai {

// Dense row-major matrix of doubles. The whole training path runs on
// 64-bit reals so finite-difference gradient checks are meaningful.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::size_t size() const { return data.size(); }
};

// Parallel kernels. Each output element is produced by exactly one thread
// with a serial inner reduction, so results are bit-identical to the
// *_serial reference implementations for any thread count. The serial
// versions are kept for tests and for the kernel benchmark.

// c = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c);

// c = a^T * b   (a: n x r, b: n x c, c: r x c)
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_tn_serial(const Matrix& a, const Matrix& b, Matrix& c);

// c = a * b^T   (a: n x k, b: m x k, c: n x m)
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nt_serial(const Matrix& a, const Matrix& b, Matrix& c);

// out[j] = sum_i a(i, j)
void col_sum(const Matrix& a, std::vector<double>& out);
void col_sum_serial(const Matrix& a, std::vector<double>& out);

// Per-column mean and biased variance over rows.
void col_mean_var(const Matrix& a, std::vector<double>& mean, std::vector<double>& var);
void col_mean_var_serial(const Matrix& a, std::vector<double>& mean, std::vector<double>& var);

// a(i, :) += v
void add_row_vector(Matrix& a, std::span<const double> v);

}  // namespace aai
