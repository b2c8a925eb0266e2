// SPDX-License-Identifier: Apache-2.0
#include "tade/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tade/error.hpp"

namespace tade::num {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "matrix data length " << data_.size() << " != " << rows_ << "x" << cols_;
    throw ShapeError(msg.str());
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ShapeError("ragged rows in Matrix::from_rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

namespace {

void require(bool ok, const char* op, std::size_t a0, std::size_t a1, std::size_t b0,
             std::size_t b1) {
  if (ok) return;
  std::ostringstream msg;
  msg << op << ": incompatible shapes " << a0 << "x" << a1 << " and " << b0 << "x" << b1;
  throw ShapeError(msg.str());
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto arow = a.row(r);
    auto brow = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += ai * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(arow, b.row(j));
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& o : out) o /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  const double lse = m + std::log(sum);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_grad: eps must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      std::ostringstream msg;
      msg << "finite_diff_grad: non-finite evaluation at coordinate " << i;
      throw NumericError(msg.str());
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace tade::num
