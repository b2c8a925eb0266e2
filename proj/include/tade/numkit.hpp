// SPDX-License-Identifier: Apache-2.0
//
// Dense numeric core: a row-major f64 matrix, the softmax family and a
// central-difference gradient oracle.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace tade::num {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds from nested rows; all rows must have equal length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a (n x k) times b (k x m). Throws ShapeError when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a b^T without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

bool all_finite(std::span<const double> v);

std::vector<double> softmax(std::span<const double> v);
std::vector<double> log_softmax(std::span<const double> v);
/// Row-wise softmax of a logit matrix.
Matrix softmax_rows(const Matrix& logits);

double dot(std::span<const double> a, std::span<const double> b);

/// First index of the maximum; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
/// coordinate. Throws NumericError if f returns a non-finite value.
std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> x,
                                     double eps = 1e-5);

}  // namespace tade::num
