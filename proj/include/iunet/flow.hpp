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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iunet/iunet.hpp"
#include "iunet/optim.hpp"
#include "iunet/tensor.hpp"

namespace iunet {

/// Normalizing flow z = f(P x) with a standard-normal base, where f is an
/// iUNet and P an optional fixed pixel shuffle (a permutation, logdet 0).
struct FlowModel {
  IUNet net;
  std::optional<StrideSpec> pre_shuffle;

  /// Shape of a data sample {C, N...}.
  std::vector<std::size_t> data_shape() const;
  std::size_t dimension() const;
};

/// The net config must not use expansion convolutions.
FlowModel make_flow(const IUNetConfig& cfg, std::uint64_t seed,
                    std::optional<StrideSpec> pre_shuffle = std::nullopt);

struct FlowForward {
  Tensor z;
  double logdet = 0.0;
};
FlowForward flow_forward(const FlowModel& model, const Tensor& x);
Tensor flow_inverse(const FlowModel& model, const Tensor& z, double* logdet = nullptr);

struct LogLikelihood {
  double ll = 0.0;
  double logdet = 0.0;
};

/// log N(f(x); 0, I) + log|det df/dx|. Throws NumericError on non-finite
/// activations.
LogLikelihood log_likelihood(const FlowModel& model, const Tensor& x);
double log_standard_normal(const Tensor& z);

/// -ll / (n log 2).
double nll_bits_per_dim(double ll, std::size_t n);
/// Mean bits/dim over a batch.
double mean_nll_bits(const FlowModel& model, const BatchTensor& data);

/// `count` draws f^-1(z), z ~ N(0, I), from Rng(seed). Each draw is checked
/// by re-running the forward pass; a relative mismatch above
/// kReconstructionTol throws NumericError.
BatchTensor sample(const FlowModel& model, std::size_t count, std::uint64_t seed);

/// log|det| of the central-difference Jacobian of x -> f(P x), for checking
/// the accumulated logdet on small models.
double jacobian_logdet(const FlowModel& model, const Tensor& x, double h = 1e-5);

struct FlowTrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 50;
  AdamConfig adam{1e-3};
  std::uint64_t seed = 0;
  /// Written after every epoch that ends with a finite NLL.
  std::optional<std::filesystem::path> checkpoint;
};

struct FlowEpoch {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_bits = 0.0;
  double val_bits = 0.0;
  double wall_time_s = 0.0;
};

struct FlowTrainLog {
  std::vector<FlowEpoch> epochs;
};

/// Minimizes the mean NLL (nats per dimension) with Adam, gradients from the
/// memory-efficient engine. Epoch rows report the mean NLL over the whole
/// train and validation sets after the epoch. If an epoch ends with a
/// non-finite NLL or a failed reconstruction, the parameters are restored
/// to the last good epoch and NumericError is thrown.
FlowTrainLog train_flow(FlowModel& model, const BatchTensor& train, const BatchTensor& val,
                        const FlowTrainConfig& cfg,
                        const std::function<void(const FlowEpoch&)>& on_epoch = {});

/// Columns: epoch, mean_train_nll_bits, mean_val_nll_bits, wall_time_s,
/// config_hash.
void write_flow_csv(const std::filesystem::path& path, const FlowTrainLog& log,
                    const std::string& config_hash);

}  // namespace iunet
