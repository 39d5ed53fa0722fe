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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "iunet/stride.hpp"

namespace iunet {

/// Dense row-major float64 matrix. Small by design: the resampling
/// operators only ever need sigma x sigma with sigma <= 27.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transpose() const;
  double frobenius_norm() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double a);

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }
  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator-(Matrix a) { return a *= -1.0; }
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Frobenius inner product.
double inner(const Matrix& a, const Matrix& b);

/// Largest absolute entrywise difference.
double max_abs_diff(const Matrix& a, const Matrix& b);

/// theta - theta^T.
Matrix skew(const Matrix& theta);

// Series truncation for exp and its Frechet derivative: stop once the newest
// term is below kSeriesRelTol relative to the running sum, or at
// kSeriesMaxTerms terms. Accuracy degrades for ||S||_F beyond about 10
// because no scaling-and-squaring is applied.
inline constexpr double kSeriesRelTol = 1e-16;
inline constexpr int kSeriesMaxTerms = 40;

/// Truncated power series sum_k S^k / k!.
Matrix matrix_exp(const Matrix& s);

/// Directional derivative exp'(S) H via sum_k M_k / k! with
/// M_1 = H, M_k = M_{k-1} S + S^{k-1} H.
Matrix matrix_exp_frechet(const Matrix& s, const Matrix& h);

/// Sign and log|det| from partially pivoted LU.
struct SlogDet {
  double sign = 0.0;
  double log_abs = 0.0;
};
SlogDet slogdet(Matrix a);

/// ||A^T A - I||_F.
double orthogonality_error(const Matrix& a);

/// sigma filters of extent s, one per row of the generating matrix.
/// Input channel count is fixed at one; wider inputs are handled as a
/// direct sum of single-channel operators.
class Kernel {
 public:
  Kernel() = default;
  Kernel(StrideSpec stride, std::vector<double> weights);

  const StrideSpec& stride() const { return stride_; }
  std::size_t filters() const { return stride_.sigma(); }
  std::size_t filter_size() const { return stride_.sigma(); }

  /// Filter i flattened row-major over the stride extents.
  std::span<const double> filter(std::size_t i) const;
  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

 private:
  StrideSpec stride_;
  std::vector<double> weights_;
};

/// Row i of `a`, reshaped row-major into the stride extents, becomes filter i.
Kernel reorder_to_kernel(const Matrix& a, const StrideSpec& s);
/// Inverse of reorder_to_kernel.
Matrix reorder_to_matrix(const Kernel& k);

}  // namespace iunet
