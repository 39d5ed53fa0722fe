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
#include "iunet/rng.hpp"
#include "iunet/stride.hpp"
#include "iunet/tensor.hpp"

namespace iunet {

enum class ResampleMode { kDown, kUp };

/// Learnable orthogonal resampling. Channel c of a C-channel input is
/// mapped by conv_block with kernel R exp(theta_c - theta_c^T); the
/// multi-channel operator is the direct sum over channels. With
/// `shared`, one theta serves every channel.
///
/// In kUp mode the operator is the inverse (= adjoint) of the
/// corresponding downsampling, mapping sigma*C channels to C.
struct ResampleOp {
  StrideSpec stride;
  std::size_t channels = 0;  // channels on the high-resolution side
  bool shared = false;
  ResampleMode mode = ResampleMode::kDown;
  std::vector<Matrix> thetas;

  std::size_t sigma() const { return stride.sigma(); }
  const Matrix& theta_for(std::size_t channel) const {
    return shared ? thetas.front() : thetas[channel];
  }
  /// exp(skew(theta)) for each stored theta.
  std::vector<Matrix> orthogonal_matrices() const;
};

inline constexpr double kThetaInitStd = 0.05;

/// Thetas drawn i.i.d. normal(0, init_std).
ResampleOp make_resample(const StrideSpec& stride, std::size_t channels, bool shared,
                         ResampleMode mode, Rng& rng, double init_std = kThetaInitStd);

/// All-zero thetas: the pixel shuffle.
ResampleOp make_pixel_shuffle(const StrideSpec& stride, std::size_t channels,
                              ResampleMode mode = ResampleMode::kDown);

/// C x N -> (sigma C) x (N / s).
Tensor down_forward(const ResampleOp& op, const Tensor& x);
/// (sigma C) x N~ -> C x (N~ * s). Inverse of down_forward.
Tensor up_forward(const ResampleOp& op, const Tensor& y);

/// Gradient of <down_forward(op, x), g> with respect to each stored theta.
std::vector<Matrix> grad_theta(const ResampleOp& op, const Tensor& x, const Tensor& g);
/// Adjoint of down_forward applied to g, which equals up_forward(op, g).
Tensor grad_input(const ResampleOp& op, const Tensor& g);

// Mode-aware entry points used by the network: `apply` runs the operator in
// its configured direction, `invert` undoes it.
Tensor apply(const ResampleOp& op, const Tensor& x);
Tensor invert(const ResampleOp& op, const Tensor& y);

struct ResampleGrads {
  Tensor grad_x;
  std::vector<Matrix> grad_thetas;
};
/// Vector-Jacobian product of `apply` at input x for output gradient g.
ResampleGrads apply_backward(const ResampleOp& op, const Tensor& x, const Tensor& g);

}  // namespace iunet
