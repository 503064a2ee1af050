// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kvspec {

/// Row-major 2-D array of 32-bit floats. Carries activations, weights,
/// caches and scores throughout the engine.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  /// Takes ownership of `data`; its length must equal rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows);
  /// A 1 x n matrix holding `values`.
  static Matrix row_vector(std::span<const float> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;
  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  /// Grows the matrix by one row. An empty 0 x 0 matrix adopts the row's width.
  void append_row(std::span<const float> values);
  void set_row(std::size_t r, std::span<const float> values);
  /// Removes row `r`, shifting later rows up.
  void erase_row(std::size_t r);
  void reserve_rows(std::size_t rows);

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Standard product of an m x k and a k x n matrix.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose (a: m x k, b: n x k).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Row vector times matrix: (1 x k) * (k x n).
std::vector<float> vecmat(std::span<const float> v, const Matrix& m);

/// Numerically stable softmax (max-subtracted). Rejects empty input.
std::vector<float> softmax_row(std::span<const float> v);

/// (x - mean) / sqrt(var + eps) * gain + bias, population variance.
std::vector<float> layernorm(std::span<const float> x, std::span<const float> gain,
                             std::span<const float> bias, float eps);

/// Row-wise layernorm over a matrix.
Matrix layernorm_rows(const Matrix& x, std::span<const float> gain,
                      std::span<const float> bias, float eps);

struct SvdResult {
  Matrix u;                  // n x r, orthonormal columns
  std::vector<float> sigma;  // r, descending, non-negative
  Matrix v;                  // d x r, orthonormal columns
};

/// Thin SVD of an n x d matrix, r = min(n, d), via one-sided Jacobi.
/// Column signs are fixed so that the largest-magnitude entry of every
/// V column is positive.
SvdResult svd(const Matrix& m);

/// Indices of the k largest values; ties go to the lower index. The result
/// is ordered by descending value.
std::vector<std::size_t> topk_indices(std::span<const float> v, std::size_t k);

/// Euclidean norm of every column.
std::vector<float> col_l2_norms(const Matrix& m);

/// Columns `cols` of `m`, in the given order.
Matrix gather_columns(const Matrix& m, std::span<const std::size_t> cols);

/// Columns [begin, begin + count) of `m`.
Matrix slice_columns(const Matrix& m, std::size_t begin, std::size_t count);

/// Rows `rows` of `m`, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

float max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);
double cosine_similarity(std::span<const float> a, std::span<const float> b);
bool all_finite(std::span<const float> v);

}  // namespace kvspec
