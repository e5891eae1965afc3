#include "aai/kernels.hpp"

#include <cassert>
#include <cstring>

namespace aai {

namespace {

inline void matmul_row(const double* a_row, const Matrix& b, double* c_row) {
  std::memset(c_row, 0, b.cols * sizeof(double));
  for (std::size_t k = 0; k < b.rows; ++k) {
    const double aik = a_row[k];
    const double* __restrict b_row = b.row(k);
    for (std::size_t j = 0; j < b.cols; ++j) c_row[j] += aik * b_row[j];
  }
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.rows);
  c.rows = a.rows;
  c.cols = b.cols;
  c.data.resize(c.rows * c.cols);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < a.rows; ++i) matmul_row(a.row(i), b, c.row(i));
}

void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.rows);
  c.rows = a.rows;
  c.cols = b.cols;
  c.data.resize(c.rows * c.cols);
  for (std::size_t i = 0; i < a.rows; ++i) matmul_row(a.row(i), b, c.row(i));
}

namespace {

inline void matmul_tn_row(const Matrix& a, const Matrix& b, std::size_t i, double* c_row) {
  std::memset(c_row, 0, b.cols * sizeof(double));
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double aki = a(k, i);
    const double* __restrict b_row = b.row(k);
    for (std::size_t j = 0; j < b.cols; ++j) c_row[j] += aki * b_row[j];
  }
}

}  // namespace

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.rows == b.rows);
  c.rows = a.cols;
  c.cols = b.cols;
  c.data.resize(c.rows * c.cols);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < a.cols; ++i) matmul_tn_row(a, b, i, c.row(i));
}

void matmul_tn_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.rows == b.rows);
  c.rows = a.cols;
  c.cols = b.cols;
  c.data.resize(c.rows * c.cols);
  for (std::size_t i = 0; i < a.cols; ++i) matmul_tn_row(a, b, i, c.row(i));
}

namespace {

inline void matmul_nt_row(const double* a_row, const Matrix& b, double* c_row) {
  for (std::size_t j = 0; j < b.rows; ++j) {
    const double* __restrict b_row = b.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < b.cols; ++k) acc += a_row[k] * b_row[k];
    c_row[j] = acc;
  }
}

}  // namespace

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.cols);
  c.rows = a.rows;
  c.cols = b.rows;
  c.data.resize(c.rows * c.cols);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < a.rows; ++i) matmul_nt_row(a.row(i), b, c.row(i));
}

void matmul_nt_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.cols);
  c.rows = a.rows;
  c.cols = b.rows;
  c.data.resize(c.rows * c.cols);
  for (std::size_t i = 0; i < a.rows; ++i) matmul_nt_row(a.row(i), b, c.row(i));
}

void col_sum(const Matrix& a, std::vector<double>& out) {
  out.assign(a.cols, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < a.cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) acc += a(i, j);
    out[j] = acc;
  }
}

void col_sum_serial(const Matrix& a, std::vector<double>& out) {
  out.assign(a.cols, 0.0);
  for (std::size_t j = 0; j < a.cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) acc += a(i, j);
    out[j] = acc;
  }
}

namespace {

inline void col_stats(const Matrix& a, std::size_t j, double* mean, double* var) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) acc += a(i, j);
  const double m = acc / static_cast<double>(a.rows);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double d = a(i, j) - m;
    sq += d * d;
  }
  *mean = m;
  *var = sq / static_cast<double>(a.rows);
}

}  // namespace

void col_mean_var(const Matrix& a, std::vector<double>& mean, std::vector<double>& var) {
  mean.resize(a.cols);
  var.resize(a.cols);
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < a.cols; ++j) col_stats(a, j, &mean[j], &var[j]);
}

void col_mean_var_serial(const Matrix& a, std::vector<double>& mean, std::vector<double>& var) {
  mean.resize(a.cols);
  var.resize(a.cols);
  for (std::size_t j = 0; j < a.cols; ++j) col_stats(a, j, &mean[j], &var[j]);
}

void add_row_vector(Matrix& a, std::span<const double> v) {
  assert(v.size() == a.cols);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* __restrict r = a.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) r[j] += v[j];
  }
}

}  // namespace aai
