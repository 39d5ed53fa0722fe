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
#include <vector>

#include "iunet/linalg.hpp"
#include "iunet/stride.hpp"
#include "iunet/tensor.hpp"

namespace iunet {

// Stride-equals-kernel convolution of a single-channel input. Every output
// pixel vector is A * patch, with A = reorder_to_matrix(k); implemented as
// patch extraction followed by one sigma x sigma GEMM.
Tensor conv_block(const Kernel& k, const Tensor& x, const StrideSpec& s);

/// Exact adjoint of conv_block in its input argument.
Tensor conv_block_transpose(const Kernel& k, const Tensor& y, const StrideSpec& s);

/// Adjoint of K -> conv_block(K, x) in the kernel argument.
Kernel conv_kernel_adjoint(const Tensor& g, const Tensor& x, const StrideSpec& s);

/// Dense 3^d kernel for the coupling subnets. Weights are laid out
/// C_out x C_in x 3 x ... x 3, row-major.
struct Conv3Weights {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t dim = 0;
  std::vector<double> w;

  Conv3Weights() = default;
  Conv3Weights(std::size_t out_ch, std::size_t in_ch, std::size_t d);

  std::size_t taps() const;
  /// Delta at the kernel center mapping input channel i to output channel i
  /// for i < min(C_in, C_out).
  static Conv3Weights centered_identity(std::size_t out_ch, std::size_t in_ch,
                                        std::size_t d);
};

/// Zero-padded, stride-1 convolution preserving spatial extents.
Tensor same_conv3(const Conv3Weights& w, const Tensor& x);

struct Conv3Grads {
  Tensor grad_x;
  std::vector<double> grad_w;
};

/// Gradients of <same_conv3(w, x), g> with respect to w and x.
Conv3Grads same_conv3_backward(const Conv3Weights& w, const Tensor& x,
                               const Tensor& g);

}  // namespace iunet
