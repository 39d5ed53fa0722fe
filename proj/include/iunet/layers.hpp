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
#include <string>
#include <utility>
#include <vector>

#include "iunet/conv.hpp"
#include "iunet/params.hpp"
#include "iunet/rng.hpp"
#include "iunet/tensor.hpp"

namespace iunet {

// ---------------------------------------------------------------------------
// Channel split / concat

/// Exact rational split fraction.
struct Fraction {
  std::size_t num = 1;
  std::size_t den = 2;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string to_string() const {
    return std::to_string(num) + "/" + std::to_string(den);
  }
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

/// lambda * C, which must be an integer in (0, C). Throws ConfigError
/// otherwise; nothing is rounded.
std::size_t split_channels(std::size_t channels, Fraction lambda);

/// (first lambda*C channels, remaining channels).
std::pair<Tensor, Tensor> split(const Tensor& x, Fraction lambda);
Tensor concat(const Tensor& keep, const Tensor& skip);

// ---------------------------------------------------------------------------
// Normalization

enum class NormScheme { kLayer, kGroup };

struct NormParams {
  NormScheme scheme = NormScheme::kLayer;
  std::size_t group_size = 0;  // channels per group, group scheme only
  double eps = 1e-6;
  std::vector<double> gamma;  // per channel
  std::vector<double> beta;   // per channel

  NormParams() = default;
  /// gamma and beta start at zero, so the layer initially outputs zeros.
  NormParams(NormScheme scheme, std::size_t channels, std::size_t group_size = 0,
             double eps = 1e-6);

  std::size_t channels() const { return gamma.size(); }
  std::size_t groups() const;
};

struct NormCache {
  Tensor x_hat;
  std::vector<double> inv_std;  // per group
};

/// Per-sample normalization over each channel group and all spatial
/// positions, followed by the per-channel affine map gamma * x_hat + beta.
Tensor normalize(const NormParams& p, const Tensor& x, NormCache* cache = nullptr);

struct NormGrads {
  Tensor grad_x;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
};
NormGrads normalize_backward(const NormParams& p, const NormCache& cache,
                             const Tensor& g);

// ---------------------------------------------------------------------------
// Coupling subnet: conv3 -> normalize -> leaky ReLU

inline constexpr double kLeakySlope = 0.01;

struct SubnetParams {
  Conv3Weights conv;
  NormParams norm;
  double slope = kLeakySlope;
};

struct SubnetCache {
  Tensor input;
  NormCache norm;
  Tensor pre_activation;

  std::size_t bytes() const {
    return input.bytes() + norm.x_hat.bytes() + pre_activation.bytes();
  }
  static constexpr std::size_t kTensorCount = 3;
};

Tensor subnet_forward(const SubnetParams& p, const Tensor& x,
                      SubnetCache* cache = nullptr);

struct SubnetGrads {
  Tensor grad_x;
  SubnetParams grad;  // same layout as the parameters
};
SubnetGrads subnet_backward(const SubnetParams& p, const SubnetCache& cache,
                            const Tensor& g);

void collect_params(SubnetParams& p, const std::string& prefix,
                    std::vector<ParamSlot>& out);
void collect_params(const SubnetParams& p, const std::string& prefix,
                    std::vector<ConstParamSlot>& out);

// ---------------------------------------------------------------------------
// Coupling layers

enum class CouplingKind { kAdditive, kAffine };

inline constexpr double kAffineClamp = 2.0;

/// Splits the channels into contiguous halves. The conditioning half is
/// passed through unchanged; the other half is shifted (additive) or
/// scaled and shifted (affine) by functions of the conditioning half.
struct CouplingLayer {
  CouplingKind kind = CouplingKind::kAdditive;
  std::size_t channels = 0;
  bool condition_on_first = true;
  double clamp = kAffineClamp;
  SubnetParams subnet;
};

struct CouplingSpec {
  CouplingKind kind = CouplingKind::kAdditive;
  std::size_t channels = 0;
  std::size_t dim = 2;
  NormScheme norm = NormScheme::kLayer;
  std::size_t group_size = 0;
  double eps = 1e-6;
  double slope = kLeakySlope;
  double clamp = kAffineClamp;
};

/// Layer `index` conditions on the first half when even and on the second
/// half when odd. Conv weights are random; gamma = beta = 0, so the layer
/// is the identity until trained.
CouplingLayer make_coupling(const CouplingSpec& spec, std::size_t index, Rng& rng);

struct CouplingCache {
  SubnetCache subnet;
  Tensor x_transformed;  // the transformed half of the input
  Tensor scale;          // clamped log-scale s (affine only)

  std::size_t bytes() const {
    return subnet.bytes() + x_transformed.bytes() + scale.bytes();
  }
  std::size_t tensor_count() const {
    return SubnetCache::kTensorCount + 1 + (scale.empty() ? 0 : 1);
  }
};

struct CouplingOutput {
  Tensor y;
  double logdet = 0.0;
};

CouplingOutput coupling_forward(const CouplingLayer& layer, const Tensor& x,
                                CouplingCache* cache = nullptr);
/// With `logdet`, also returns log|det| of the inverse map, which is minus
/// the forward logdet at the reconstructed input.
Tensor coupling_inverse(const CouplingLayer& layer, const Tensor& y,
                        double* logdet = nullptr);

struct CouplingGrads {
  Tensor grad_x;
  SubnetParams grad;
};

/// VJP of (y, logdet) = coupling_forward(x) for output gradients grad_y and
/// grad_logdet. `recomputed_x` must be the layer input (e.g. reconstructed
/// by coupling_inverse).
CouplingGrads coupling_backward(const CouplingLayer& layer, const Tensor& y,
                                const Tensor& grad_y, const Tensor& recomputed_x,
                                double grad_logdet = 0.0);
/// Same as coupling_backward, from a cache filled by coupling_forward.
CouplingGrads coupling_backward_cached(const CouplingLayer& layer,
                                       const CouplingCache& cache,
                                       const Tensor& grad_y, double grad_logdet = 0.0);

}  // namespace iunet
