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

// Test-only oracles: finite differences, brute-force Jacobians and naive
// reference kernels. Nothing here calls into the implementation paths it
// is used to check, beyond the function under test itself.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "iunet/linalg.hpp"
#include "iunet/rng.hpp"
#include "iunet/tensor.hpp"

namespace iunet::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, scale);
  return m;
}

inline Tensor random_tensor(std::size_t channels, std::vector<std::size_t> spatial,
                            Rng& rng, double scale = 1.0) {
  Tensor t(channels, std::move(spatial));
  for (double& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

/// Central-difference gradient of a scalar function over every entry of
/// `params` (modified in place and restored).
inline std::vector<double> fd_gradient(std::span<double> params,
                                       const std::function<double()>& f,
                                       double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double fp = f();
    params[i] = saved - h;
    const double fm = f();
    params[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||b||, floor).
inline double rel_err(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-300) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

/// Jacobian of f: R^n -> R^n at x by central differences; column j is
/// d f / d x_j.
inline Matrix fd_jacobian(const std::function<Tensor(const Tensor&)>& f,
                          const Tensor& x, double h = 1e-5) {
  const std::size_t n = x.numel();
  Matrix jac(f(x).numel(), n);
  Tensor xp = x;
  for (std::size_t j = 0; j < n; ++j) {
    const double saved = xp[j];
    xp[j] = saved + h;
    const Tensor fp = f(xp);
    xp[j] = saved - h;
    const Tensor fm = f(xp);
    xp[j] = saved;
    for (std::size_t i = 0; i < fp.numel(); ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

/// log|det a| by Gaussian elimination with partial pivoting, kept separate
/// from the library's slogdet.
inline double log_abs_det(Matrix a) {
  const std::size_t n = a.rows();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::abs(a(r, k)) > std::abs(a(p, k))) p = r;
    for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(p, c));
    const double d = a(k, k);
    if (d == 0.0) return -INFINITY;
    acc += std::log(std::abs(d));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a(r, k) / d;
      for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
    }
  }
  return acc;
}

/// Signed determinant, same elimination.
inline double det(Matrix a) {
  const std::size_t n = a.rows();
  double acc = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::abs(a(r, k)) > std::abs(a(p, k))) p = r;
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(p, c));
      acc = -acc;
    }
    const double d = a(k, k);
    acc *= d;
    if (d == 0.0) return 0.0;
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a(r, k) / d;
      for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
    }
  }
  return acc;
}

/// Sliding-window strided convolution, straight from the definition:
/// y[o, q] = sum_{j in window} K[o, j] x[q * s + j], windows of extent s.
inline Tensor naive_strided_conv(std::span<const double> kernel, std::size_t filters,
                                 const Tensor& x, const std::vector<std::size_t>& s) {
  const std::size_t d = s.size();
  std::vector<std::size_t> out_ext(d);
  for (std::size_t a = 0; a < d; ++a) out_ext[a] = x.spatial()[a] / s[a];
  Tensor y(filters, out_ext);
  std::size_t win = 1;
  for (std::size_t v : s) win *= v;
  std::vector<std::size_t> q(d, 0), j(d, 0);
  const std::size_t out_size = y.spatial_size();
  for (std::size_t o = 0; o < filters; ++o) {
    for (std::size_t qi = 0; qi < out_size; ++qi) {
      std::size_t rem = qi;
      for (std::size_t a = d; a-- > 0;) {
        q[a] = rem % out_ext[a];
        rem /= out_ext[a];
      }
      double acc = 0.0;
      for (std::size_t ji = 0; ji < win; ++ji) {
        std::size_t r = ji;
        for (std::size_t a = d; a-- > 0;) {
          j[a] = r % s[a];
          r /= s[a];
        }
        std::size_t idx = 0;
        for (std::size_t a = 0; a < d; ++a) idx = idx * x.spatial()[a] + q[a] * s[a] + j[a];
        acc += kernel[o * win + ji] * x[idx];
      }
      y[o * out_size + qi] = acc;
    }
  }
  return y;
}

/// Zero-padded 3^d convolution from the definition.
inline Tensor naive_same_conv3(const std::vector<double>& w, std::size_t out_ch,
                               std::size_t in_ch, const Tensor& x) {
  const std::size_t d = x.dim();
  std::size_t taps = 1;
  for (std::size_t a = 0; a < d; ++a) taps *= 3;
  Tensor y(out_ch, x.spatial());
  const auto& n = x.spatial();
  const std::size_t size = x.spatial_size();
  std::vector<long> p(d), t(d);
  for (std::size_t o = 0; o < out_ch; ++o)
    for (std::size_t pi = 0; pi < size; ++pi) {
      std::size_t rem = pi;
      for (std::size_t a = d; a-- > 0;) {
        p[a] = static_cast<long>(rem % n[a]);
        rem /= n[a];
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < in_ch; ++i)
        for (std::size_t ti = 0; ti < taps; ++ti) {
          std::size_t r = ti;
          for (std::size_t a = d; a-- > 0;) {
            t[a] = static_cast<long>(r % 3) - 1;
            r /= 3;
          }
          bool inside = true;
          std::size_t idx = 0;
          for (std::size_t a = 0; a < d; ++a) {
            const long c = p[a] + t[a];
            if (c < 0 || c >= static_cast<long>(n[a])) inside = false;
            idx = idx * n[a] + static_cast<std::size_t>(std::max(c, 0L));
          }
          if (inside) acc += w[(o * in_ch + i) * taps + ti] * x[i * size + idx];
        }
      y[o * size + pi] = acc;
    }
  return y;
}

}  // namespace iunet::testing
