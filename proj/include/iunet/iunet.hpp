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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iunet/conv.hpp"
#include "iunet/layers.hpp"
#include "iunet/params.hpp"
#include "iunet/resample.hpp"
#include "iunet/stride.hpp"
#include "iunet/tensor.hpp"

namespace iunet {

/// Architecture of an invertible U-Net with `scales` resolution levels.
/// Per-scale lists (strides, split fractions) have scales - 1 entries, one
/// per down/upsampling pair.
struct IUNetConfig {
  std::size_t dim = 2;
  std::size_t scales = 3;
  std::size_t base_channels = 4;
  std::vector<StrideSpec> strides;
  std::vector<Fraction> split_fractions;
  std::size_t couplings_per_block = 2;  // delta
  CouplingKind coupling = CouplingKind::kAdditive;
  NormScheme norm = NormScheme::kLayer;
  std::size_t group_size = 0;
  bool share_theta = true;
  // Downsample first and split the downsampled channels, instead of the
  // default split-then-downsample.
  bool downsample_before_split = false;
  // When nonzero, data with this many channels is lifted to base_channels
  // by a 3^d convolution before the invertible core and projected back
  // after it. Both convolutions start as identity embeddings.
  std::size_t data_channels = 0;
  std::vector<std::size_t> input_spatial;
  double clamp = kAffineClamp;
  double slope = kLeakySlope;
  double eps = 1e-6;
  double theta_init_std = kThetaInitStd;

  /// Channels entering each scale: C_1 = base_channels,
  /// C_{i+1} = sigma_i * lambda_i * C_i.
  std::vector<std::size_t> channel_ladder() const;
  /// Spatial extents at each scale.
  std::vector<std::vector<std::size_t>> spatial_ladder() const;
  /// Throws ConfigError naming the offending scale.
  void validate() const;
  std::size_t input_channels() const {
    return data_channels > 0 ? data_channels : base_channels;
  }
  std::vector<std::size_t> input_shape() const;

  /// Convenience: the same stride and split fraction at every scale.
  static IUNetConfig uniform(std::size_t dim, std::size_t scales,
                             std::size_t base_channels, std::size_t stride,
                             Fraction lambda, std::size_t couplings,
                             std::vector<std::size_t> input_spatial);
};

/// "num/den" or a bare integer numerator over 1.
Fraction parse_fraction(const std::string& text);

nlohmann::json to_json(const IUNetConfig& cfg);
/// Parses a config object. Unknown keys are a ConfigError.
IUNetConfig config_from_json(const nlohmann::json& j);

struct IUNet {
  IUNetConfig cfg;
  std::vector<std::size_t> ladder;
  std::optional<Conv3Weights> expand_in;
  std::optional<Conv3Weights> expand_out;
  std::vector<std::vector<CouplingLayer>> left;   // Phi^L_i, i = 1..m
  std::vector<std::vector<CouplingLayer>> right;  // Phi^R_i
  std::vector<ResampleOp> down;                   // D_i, i < m
  std::vector<ResampleOp> up;                     // U_i, i < m
};

/// Deterministic initialization. Normalization gains start at zero, so the
/// invertible core is the identity map.
IUNet build(const IUNetConfig& cfg, std::uint64_t seed);

/// Every trainable array with a stable path name. The order is fixed and
/// shared by gradient reports.
std::vector<ParamSlot> params(IUNet& net);
std::vector<ConstParamSlot> params(const IUNet& net);
std::size_t param_count(const IUNet& net);

// ---------------------------------------------------------------------------
// Stage plan: the network as a flat sequence of invertible steps acting on
// (working tensor, skip tensors).

enum class StageKind { kCoupling, kSplit, kResample, kConcat };

struct Stage {
  StageKind kind;
  std::size_t scale;      // 0-based
  std::size_t index = 0;  // coupling index inside its block
  bool right = false;     // right (upsampling) side of the U
  std::string name() const;
};

std::vector<Stage> stage_plan(const IUNet& net);

// ---------------------------------------------------------------------------
// Activation accounting

/// Peak activation storage of a pass. Engines report the total they hold
/// (bytes and tensor count) after every step; the ledger keeps the maxima.
class ActivationLedger {
 public:
  void record(std::size_t bytes, std::size_t tensors) {
    peak_bytes_ = std::max(peak_bytes_, bytes);
    peak_tensors_ = std::max(peak_tensors_, tensors);
  }
  std::size_t peak_bytes() const { return peak_bytes_; }
  std::size_t peak_tensors() const { return peak_tensors_; }

 private:
  std::size_t peak_bytes_ = 0;
  std::size_t peak_tensors_ = 0;
};

/// Everything a conventional backward pass needs, recorded by forward.
struct Tape {
  const IUNet* net = nullptr;
  Tensor input;        // network input
  Tensor core_input;   // after expand_in (equals input without expansion)
  Tensor core_output;  // before expand_out
  std::vector<CouplingCache> coupling_caches;  // by stage
  std::vector<Tensor> resample_inputs;         // by stage
  Tensor output;
  double logdet = 0.0;
  double forward_time_s = 0.0;
  std::size_t stored_bytes = 0;  // everything above
  std::size_t stored_tensors = 0;
  ActivationLedger ledger;
};

struct ForwardResult {
  Tensor y;
  double logdet = 0.0;
};

/// Runs the network. With a tape, every stage input is recorded for
/// backward_conventional.
ForwardResult forward(const IUNet& net, const Tensor& x, Tape* tape = nullptr);
/// Inverse of the invertible core, optionally with the log|det| of the
/// inverse map. Throws UsageError if the net has expansion convolutions,
/// which are not invertible.
Tensor inverse(const IUNet& net, const Tensor& y, double* logdet = nullptr);

struct GradReport {
  std::vector<NamedArray> grads;  // same order as params()
  Tensor grad_input;
  Tensor output;
  double logdet = 0.0;
  std::size_t peak_stored_activation_bytes = 0;
  std::size_t stored_tensor_count = 0;
  double wall_time_s = 0.0;
};

/// Reversible-state threshold for the reconstruction guard.
inline constexpr double kReconstructionTol = 1e-4;

/// Gradients of <y, grad_out> + grad_logdet * logdet. The forward pass keeps
/// only the working tensor and the skip tensors; the backward sweep
/// reconstructs each stage input by inverting the stage. Throws
/// NumericError naming the stage if a reconstruction fails its round-trip
/// check.
GradReport backward_memeff(const IUNet& net, const Tensor& x, const Tensor& grad_out,
                           double grad_logdet = 0.0);
/// Same gradients from a tape recorded by forward. Throws UsageError
/// without a tape. wall_time_s includes the taped forward pass so the two
/// engines report comparable times.
GradReport backward_conventional(const IUNet& net, const Tape* tape,
                                 const Tensor& grad_out, double grad_logdet = 0.0);

/// Flattened gradient vector in params() order.
std::vector<double> flatten(const std::vector<NamedArray>& arrays);

}  // namespace iunet
