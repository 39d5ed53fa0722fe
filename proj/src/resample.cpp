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

#include "iunet/resample.hpp"

#include <string>

#include "iunet/conv.hpp"
#include "iunet/error.hpp"

namespace iunet {

namespace {

std::vector<Kernel> kernels(const ResampleOp& op) {
  std::vector<Kernel> out;
  out.reserve(op.thetas.size());
  for (const Matrix& m : op.orthogonal_matrices()) {
    out.push_back(reorder_to_kernel(m, op.stride));
  }
  return out;
}

void check_op(const ResampleOp& op) {
  const std::size_t expected = op.shared ? 1 : op.channels;
  if (op.thetas.size() != expected) {
    throw ShapeError("resample op over " + std::to_string(op.channels) +
                     " channels holds " + std::to_string(op.thetas.size()) +
                     " theta matrices, expected " + std::to_string(expected));
  }
}

void check_low_res(const ResampleOp& op, const Tensor& y) {
  if (y.channels() != op.sigma() * op.channels) {
    throw ShapeError("resample expects " + std::to_string(op.sigma() * op.channels) +
                     " low-resolution channels (sigma " + std::to_string(op.sigma()) +
                     "), got " + y.shape_string());
  }
}

void check_high_res(const ResampleOp& op, const Tensor& x) {
  if (x.channels() != op.channels) {
    throw ShapeError("resample expects " + std::to_string(op.channels) +
                     " channels, got " + x.shape_string());
  }
}

void write_block(Tensor& dst, std::size_t first_channel, const Tensor& src) {
  auto d = dst.data().subspan(first_channel * dst.spatial_size(), src.numel());
  std::copy(src.data().begin(), src.data().end(), d.begin());
}

}  // namespace

std::vector<Matrix> ResampleOp::orthogonal_matrices() const {
  std::vector<Matrix> out;
  out.reserve(thetas.size());
  for (const Matrix& t : thetas) out.push_back(matrix_exp(skew(t)));
  return out;
}

ResampleOp make_resample(const StrideSpec& stride, std::size_t channels, bool shared,
                         ResampleMode mode, Rng& rng, double init_std) {
  ResampleOp op{stride, channels, shared, mode, {}};
  const std::size_t count = shared ? 1 : channels;
  const std::size_t sigma = stride.sigma();
  for (std::size_t c = 0; c < count; ++c) {
    Matrix t(sigma, sigma);
    for (double& v : t.data()) v = rng.normal(0.0, init_std);
    op.thetas.push_back(std::move(t));
  }
  return op;
}

ResampleOp make_pixel_shuffle(const StrideSpec& stride, std::size_t channels,
                              ResampleMode mode) {
  return ResampleOp{stride, channels, true, mode,
                    {Matrix(stride.sigma(), stride.sigma())}};
}

Tensor down_forward(const ResampleOp& op, const Tensor& x) {
  check_op(op);
  check_high_res(op, x);
  const auto ks = kernels(op);
  Tensor y;
  for (std::size_t c = 0; c < op.channels; ++c) {
    Tensor block = conv_block(ks[op.shared ? 0 : c], slice_channels(x, c, 1), op.stride);
    if (c == 0) y = Tensor(op.sigma() * op.channels, block.spatial());
    write_block(y, c * op.sigma(), block);
  }
  return y;
}

Tensor up_forward(const ResampleOp& op, const Tensor& y) {
  check_op(op);
  check_low_res(op, y);
  const auto ks = kernels(op);
  Tensor x;
  for (std::size_t c = 0; c < op.channels; ++c) {
    Tensor block = conv_block_transpose(
        ks[op.shared ? 0 : c], slice_channels(y, c * op.sigma(), op.sigma()), op.stride);
    if (c == 0) x = Tensor(op.channels, block.spatial());
    write_block(x, c, block);
  }
  return x;
}

std::vector<Matrix> grad_theta(const ResampleOp& op, const Tensor& x, const Tensor& g) {
  check_op(op);
  check_high_res(op, x);
  check_low_res(op, g);
  const std::size_t sigma = op.sigma();
  std::vector<Matrix> grads(op.thetas.size(), Matrix(sigma, sigma));
  std::vector<Matrix> skews;
  for (const Matrix& t : op.thetas) skews.push_back(skew(t));
  for (std::size_t c = 0; c < op.channels; ++c) {
    const std::size_t p = op.shared ? 0 : c;
    const Kernel gk = conv_kernel_adjoint(slice_channels(g, c * sigma, sigma),
                                          slice_channels(x, c, 1), op.stride);
    // Gradient with respect to S, then through Gamma (self-adjoint).
    const Matrix gs =
        matrix_exp_frechet(skews[p].transpose(), reorder_to_matrix(gk));
    grads[p] += skew(gs);
  }
  return grads;
}

Tensor grad_input(const ResampleOp& op, const Tensor& g) { return up_forward(op, g); }

Tensor apply(const ResampleOp& op, const Tensor& x) {
  return op.mode == ResampleMode::kDown ? down_forward(op, x) : up_forward(op, x);
}

Tensor invert(const ResampleOp& op, const Tensor& y) {
  return op.mode == ResampleMode::kDown ? up_forward(op, y) : down_forward(op, y);
}

ResampleGrads apply_backward(const ResampleOp& op, const Tensor& x, const Tensor& g) {
  if (op.mode == ResampleMode::kDown) {
    return {grad_input(op, g), grad_theta(op, x, g)};
  }
  // y = D^T x, so <y, g> = <x, D g> = <K, conv_kernel_adjoint(x, g)>: the
  // roles of input and output gradient swap relative to downsampling.
  return {down_forward(op, g), grad_theta(op, g, x)};
}

}  // namespace iunet
