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

#include "iunet/conv.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "iunet/error.hpp"

namespace iunet {

namespace {

using Ext3 = std::array<std::size_t, 3>;

struct BlockGeometry {
  Ext3 n;       // input extents
  Ext3 s;       // stride = window
  Ext3 q;       // output extents
  std::size_t sigma;
  std::size_t blocks;
};

BlockGeometry block_geometry(const std::vector<std::size_t>& spatial,
                             const StrideSpec& s) {
  if (spatial.size() != s.dim()) {
    throw ShapeError("stride " + s.to_string() + " has " + std::to_string(s.dim()) +
                     " axes but the tensor has " + std::to_string(spatial.size()));
  }
  BlockGeometry g{};
  g.n = canonical_extents(spatial);
  g.s = s.canonical();
  g.sigma = s.sigma();
  g.blocks = 1;
  for (int a = 0; a < 3; ++a) {
    if (g.n[a] % g.s[a] != 0) {
      throw ShapeError("spatial extent " + std::to_string(g.n[a]) +
                       " is not divisible by stride " + std::to_string(g.s[a]) +
                       " (no implicit padding)");
    }
    g.q[a] = g.n[a] / g.s[a];
    g.blocks *= g.q[a];
  }
  return g;
}

std::vector<std::size_t> downsampled(const std::vector<std::size_t>& spatial,
                                     const StrideSpec& s) {
  std::vector<std::size_t> out(spatial.size());
  for (std::size_t a = 0; a < spatial.size(); ++a) out[a] = spatial[a] / s[a];
  return out;
}

std::vector<std::size_t> upsampled(const std::vector<std::size_t>& spatial,
                                   const StrideSpec& s) {
  std::vector<std::size_t> out(spatial.size());
  for (std::size_t a = 0; a < spatial.size(); ++a) out[a] = spatial[a] * s[a];
  return out;
}

// Visits every (block, offset-within-block) pair with the flat input index.
template <class Fn>
void for_each_patch_entry(const BlockGeometry& g, Fn&& fn) {
  std::size_t b = 0;
  for (std::size_t q0 = 0; q0 < g.q[0]; ++q0)
    for (std::size_t q1 = 0; q1 < g.q[1]; ++q1)
      for (std::size_t q2 = 0; q2 < g.q[2]; ++q2, ++b) {
        std::size_t j = 0;
        for (std::size_t j0 = 0; j0 < g.s[0]; ++j0)
          for (std::size_t j1 = 0; j1 < g.s[1]; ++j1)
            for (std::size_t j2 = 0; j2 < g.s[2]; ++j2, ++j) {
              const std::size_t i0 = q0 * g.s[0] + j0;
              const std::size_t i1 = q1 * g.s[1] + j1;
              const std::size_t i2 = q2 * g.s[2] + j2;
              fn(b, j, (i0 * g.n[1] + i1) * g.n[2] + i2);
            }
      }
}

// Patch matrix P (sigma x blocks): column b is the vectorized window b.
std::vector<double> gather_patches(std::span<const double> x, const BlockGeometry& g) {
  std::vector<double> p(g.sigma * g.blocks);
  for_each_patch_entry(g, [&](std::size_t b, std::size_t j, std::size_t idx) {
    p[j * g.blocks + b] = x[idx];
  });
  return p;
}

void scatter_patches(const std::vector<double>& p, const BlockGeometry& g,
                     std::span<double> x) {
  for_each_patch_entry(g, [&](std::size_t b, std::size_t j, std::size_t idx) {
    x[idx] = p[j * g.blocks + b];
  });
}

// out (m x n) = op(A) (m x k) * B (k x n), A is sigma x sigma row-major.
void gemm(std::span<const double> a, bool transpose_a, std::size_t m, std::size_t k,
          const double* b, std::size_t n, double* out) {
  std::fill(out, out + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double aik = transpose_a ? a[l * m + i] : a[i * k + l];
      if (aik == 0.0) continue;
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
    }
  }
}

void check_kernel(const Kernel& k, const StrideSpec& s) {
  if (!(k.stride() == s)) {
    throw ShapeError("kernel extents " + k.stride().to_string() +
                     " must equal the stride " + s.to_string());
  }
}

}  // namespace

Tensor conv_block(const Kernel& k, const Tensor& x, const StrideSpec& s) {
  check_kernel(k, s);
  if (x.channels() != 1) {
    throw ShapeError("conv_block expects a single input channel, got " +
                     x.shape_string());
  }
  const BlockGeometry g = block_geometry(x.spatial(), s);
  const std::vector<double> p = gather_patches(x.channel(0), g);
  Tensor y(g.sigma, downsampled(x.spatial(), s));
  gemm(k.weights(), false, g.sigma, g.sigma, p.data(), g.blocks, y.data().data());
  return y;
}

Tensor conv_block_transpose(const Kernel& k, const Tensor& y, const StrideSpec& s) {
  check_kernel(k, s);
  if (y.channels() != s.sigma()) {
    throw ShapeError("conv_block_transpose expects " + std::to_string(s.sigma()) +
                     " channels, got " + y.shape_string());
  }
  Tensor x(1, upsampled(y.spatial(), s));
  const BlockGeometry g = block_geometry(x.spatial(), s);
  std::vector<double> p(g.sigma * g.blocks);
  gemm(k.weights(), true, g.sigma, g.sigma, y.data().data(), g.blocks, p.data());
  scatter_patches(p, g, x.channel(0));
  return x;
}

Kernel conv_kernel_adjoint(const Tensor& g, const Tensor& x, const StrideSpec& s) {
  if (x.channels() != 1) {
    throw ShapeError("conv_kernel_adjoint expects a single input channel, got " +
                     x.shape_string());
  }
  const BlockGeometry geo = block_geometry(x.spatial(), s);
  if (g.channels() != geo.sigma || g.spatial() != downsampled(x.spatial(), s)) {
    throw ShapeError("conv_kernel_adjoint: gradient " + g.shape_string() +
                     " does not match the output shape of input " + x.shape_string());
  }
  const std::vector<double> p = gather_patches(x.channel(0), geo);
  // K = G * P^T, both sigma x blocks.
  std::vector<double> w(geo.sigma * geo.sigma, 0.0);
  auto gd = g.data();
  for (std::size_t i = 0; i < geo.sigma; ++i) {
    const double* grow = gd.data() + i * geo.blocks;
    for (std::size_t j = 0; j < geo.sigma; ++j) {
      const double* prow = p.data() + j * geo.blocks;
      double acc = 0.0;
      for (std::size_t b = 0; b < geo.blocks; ++b) acc += grow[b] * prow[b];
      w[i * geo.sigma + j] = acc;
    }
  }
  return Kernel(s, std::move(w));
}

Conv3Weights::Conv3Weights(std::size_t out_ch, std::size_t in_ch, std::size_t d)
    : out_channels(out_ch), in_channels(in_ch), dim(d) {
  if (d < 1 || d > 3) throw ShapeError("conv3 dimensionality must be 1 to 3");
  if (out_ch == 0 || in_ch == 0) throw ShapeError("conv3 channel counts must be >= 1");
  w.assign(out_ch * in_ch * taps(), 0.0);
}

std::size_t Conv3Weights::taps() const {
  std::size_t t = 1;
  for (std::size_t a = 0; a < dim; ++a) t *= 3;
  return t;
}

Conv3Weights Conv3Weights::centered_identity(std::size_t out_ch, std::size_t in_ch,
                                             std::size_t d) {
  Conv3Weights k(out_ch, in_ch, d);
  const std::size_t t = k.taps();
  for (std::size_t c = 0; c < std::min(out_ch, in_ch); ++c) {
    k.w[(c * in_ch + c) * t + t / 2] = 1.0;
  }
  return k;
}

namespace {

struct Conv3Geometry {
  Ext3 n;
  Ext3 k;  // 3 on active axes, 1 on padding axes
};

Conv3Geometry conv3_geometry(const Conv3Weights& w, const Tensor& x) {
  if (x.dim() != w.dim) {
    throw ShapeError("conv3 kernel is " + std::to_string(w.dim) +
                     "-d but the input is " + x.shape_string());
  }
  if (x.channels() != w.in_channels) {
    throw ShapeError("conv3 expects " + std::to_string(w.in_channels) +
                     " input channels, got " + x.shape_string());
  }
  Conv3Geometry g{};
  g.n = canonical_extents(x.spatial());
  for (int a = 0; a < 3; ++a) g.k[a] = (a >= 3 - static_cast<int>(w.dim)) ? 3 : 1;
  return g;
}

// Calls fn(out_offset, in_offset, len) for each contiguous run of output
// positions that read a valid input row at kernel tap (t0, t1, t2).
template <class Fn>
void for_each_tap_run(const Conv3Geometry& g, std::size_t t0, std::size_t t1,
                      std::size_t t2, Fn&& fn) {
  const long c0 = static_cast<long>(g.k[0] / 2);
  const long c1 = static_cast<long>(g.k[1] / 2);
  const long c2 = static_cast<long>(g.k[2] / 2);
  const long d0 = static_cast<long>(t0) - c0;
  const long d1 = static_cast<long>(t1) - c1;
  const long d2 = static_cast<long>(t2) - c2;
  const long n0 = static_cast<long>(g.n[0]);
  const long n1 = static_cast<long>(g.n[1]);
  const long n2 = static_cast<long>(g.n[2]);
  const long lo2 = std::max(0L, -d2);
  const long hi2 = std::min(n2, n2 - d2);
  if (hi2 <= lo2) return;
  for (long p0 = std::max(0L, -d0); p0 < std::min(n0, n0 - d0); ++p0) {
    for (long p1 = std::max(0L, -d1); p1 < std::min(n1, n1 - d1); ++p1) {
      const long out = (p0 * n1 + p1) * n2 + lo2;
      const long in = ((p0 + d0) * n1 + (p1 + d1)) * n2 + lo2 + d2;
      fn(static_cast<std::size_t>(out), static_cast<std::size_t>(in),
         static_cast<std::size_t>(hi2 - lo2));
    }
  }
}

}  // namespace

Tensor same_conv3(const Conv3Weights& w, const Tensor& x) {
  const Conv3Geometry g = conv3_geometry(w, x);
  Tensor y(w.out_channels, x.spatial());
  const std::size_t taps = w.taps();
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    auto yo = y.channel(o);
    for (std::size_t i = 0; i < w.in_channels; ++i) {
      auto xi = x.channel(i);
      const double* wk = w.w.data() + (o * w.in_channels + i) * taps;
      std::size_t t = 0;
      for (std::size_t t0 = 0; t0 < g.k[0]; ++t0)
        for (std::size_t t1 = 0; t1 < g.k[1]; ++t1)
          for (std::size_t t2 = 0; t2 < g.k[2]; ++t2, ++t) {
            const double wv = wk[t];
            if (wv == 0.0) continue;
            for_each_tap_run(g, t0, t1, t2,
                             [&](std::size_t out, std::size_t in, std::size_t len) {
                               for (std::size_t r = 0; r < len; ++r)
                                 yo[out + r] += wv * xi[in + r];
                             });
          }
    }
  }
  return y;
}

Conv3Grads same_conv3_backward(const Conv3Weights& w, const Tensor& x,
                               const Tensor& g) {
  const Conv3Geometry geo = conv3_geometry(w, x);
  if (g.channels() != w.out_channels || g.spatial() != x.spatial()) {
    throw ShapeError("same_conv3_backward: gradient " + g.shape_string() +
                     " does not match the output shape");
  }
  Conv3Grads out{Tensor::zeros_like(x), std::vector<double>(w.w.size(), 0.0)};
  const std::size_t taps = w.taps();
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    auto go = g.channel(o);
    for (std::size_t i = 0; i < w.in_channels; ++i) {
      auto xi = x.channel(i);
      auto gxi = out.grad_x.channel(i);
      const std::size_t base = (o * w.in_channels + i) * taps;
      std::size_t t = 0;
      for (std::size_t t0 = 0; t0 < geo.k[0]; ++t0)
        for (std::size_t t1 = 0; t1 < geo.k[1]; ++t1)
          for (std::size_t t2 = 0; t2 < geo.k[2]; ++t2, ++t) {
            const double wv = w.w[base + t];
            double acc = 0.0;
            for_each_tap_run(geo, t0, t1, t2,
                             [&](std::size_t outp, std::size_t in, std::size_t len) {
                               for (std::size_t r = 0; r < len; ++r) {
                                 acc += go[outp + r] * xi[in + r];
                                 gxi[in + r] += wv * go[outp + r];
                               }
                             });
            out.grad_w[base + t] += acc;
          }
    }
  }
  return out;
}

}  // namespace iunet
