// Copyright 2026 The iUNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iunet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "iunet/error.hpp"

namespace iunet {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("matrix extents must be >= 1");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  if (rows_ == 0 || cols_ == 0) throw ShapeError("matrix extents must be >= 1");
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius_norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return std::sqrt(acc);
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ShapeError("matrix size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ShapeError("matrix size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols_ != b.rows_) {
    throw ShapeError("matrix product: inner extents " + std::to_string(a.cols_) +
                     " and " + std::to_string(b.rows_) + " differ");
  }
  Matrix c(a.rows_, b.cols_);
  for (std::size_t i = 0; i < a.rows_; ++i) {
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

double inner(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("inner product: matrix size mismatch");
  }
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += da[i] * db[i];
  return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff: matrix size mismatch");
  }
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

Matrix skew(const Matrix& theta) {
  if (!theta.square()) throw ShapeError("skew: parameter matrix must be square");
  const std::size_t n = theta.rows();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = theta(i, j) - theta(j, i);
  return s;
}

Matrix matrix_exp(const Matrix& s) {
  if (!s.square()) throw ShapeError("matrix_exp: matrix must be square");
  const std::size_t n = s.rows();
  Matrix sum = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k < kSeriesMaxTerms; ++k) {
    term = term * s;
    term *= 1.0 / k;
    sum += term;
    if (term.frobenius_norm() <= kSeriesRelTol * sum.frobenius_norm()) break;
  }
  return sum;
}

Matrix matrix_exp_frechet(const Matrix& s, const Matrix& h) {
  if (!s.square() || !h.square() || s.rows() != h.rows()) {
    throw ShapeError("matrix_exp_frechet: S and H must be square and equal size");
  }
  // term_k = M_k / k!, power = S^{k-1} / (k-1)!; then
  // term_{k+1} = (term_k S + power_{k+1} H) / (k+1) with power_{k+1} = power_k S / k.
  Matrix term = h;
  Matrix sum = h;
  Matrix power = Matrix::identity(s.rows());
  for (int k = 1; k < kSeriesMaxTerms; ++k) {
    power = power * s;
    power *= 1.0 / k;
    term = term * s + power * h;
    term *= 1.0 / (k + 1);
    sum += term;
    if (term.frobenius_norm() <= kSeriesRelTol * sum.frobenius_norm()) break;
  }
  return sum;
}

SlogDet slogdet(Matrix a) {
  if (!a.square()) throw ShapeError("slogdet: matrix must be square");
  const std::size_t n = a.rows();
  SlogDet out{1.0, 0.0};
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) return {0.0, -INFINITY};
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(pivot, c), a(col, c));
      out.sign = -out.sign;
    }
    const double d = a(col, col);
    if (d < 0) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(d));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / d;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
    }
  }
  return out;
}

double orthogonality_error(const Matrix& a) {
  return (a.transpose() * a - Matrix::identity(a.cols())).frobenius_norm();
}

Kernel::Kernel(StrideSpec stride, std::vector<double> weights)
    : stride_(std::move(stride)), weights_(std::move(weights)) {
  const std::size_t sigma = stride_.sigma();
  if (weights_.size() != sigma * sigma) {
    throw ShapeError("kernel for stride " + stride_.to_string() + " needs " +
                     std::to_string(sigma * sigma) + " weights, got " +
                     std::to_string(weights_.size()));
  }
}

std::span<const double> Kernel::filter(std::size_t i) const {
  const std::size_t sigma = stride_.sigma();
  return std::span<const double>(weights_).subspan(i * sigma, sigma);
}

Kernel reorder_to_kernel(const Matrix& a, const StrideSpec& s) {
  const std::size_t sigma = s.sigma();
  if (a.rows() != sigma || a.cols() != sigma) {
    throw ShapeError("reorder_to_kernel: matrix is " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " but stride " +
                     s.to_string() + " needs " + std::to_string(sigma) + "x" +
                     std::to_string(sigma));
  }
  // Row-major storage of the matrix already is filter-major, row-major
  // within each filter.
  auto d = a.data();
  return Kernel(s, std::vector<double>(d.begin(), d.end()));
}

Matrix reorder_to_matrix(const Kernel& k) {
  const std::size_t sigma = k.stride().sigma();
  Matrix a(sigma, sigma);
  auto w = k.weights();
  std::copy(w.begin(), w.end(), a.data().begin());
  return a;
}

}  // namespace iunet
