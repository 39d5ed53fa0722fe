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

// Command implementations behind the `iunet` binary. Each command is a
// plain function returning its results, so tests can drive it without a
// process boundary; `run` adds argument parsing and exit codes.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iunet/data.hpp"
#include "iunet/flow.hpp"
#include "iunet/iunet.hpp"
#include "iunet/optim.hpp"
#include "iunet/tensor.hpp"

namespace iunet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // failed check, assertion or divergence
inline constexpr int kExitConfig = 2;   // bad flags, config or input files

/// Parses `args` (without the program name) and runs the subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a hash of the canonical JSON dump, tagged onto every CSV row.
std::string config_hash(const nlohmann::json& config);

/// Reads a JSON file; parse errors become ConfigError.
nlohmann::json read_json_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// verify

struct CheckResult {
  std::string group;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::string group;  // empty runs every group
  // Test hook: makes one resampling theta non-finite before the
  // orthogonality group runs.
  bool inject_nonfinite_theta = false;
  std::uint64_t seed = 2024;
};

std::vector<std::string> verify_groups();
/// Prints one line per check. Throws ConfigError for an unknown group.
std::vector<CheckResult> cmd_verify(const VerifyOptions& opts, std::ostream& out);

// ---------------------------------------------------------------------------
// downsample-demo

enum class DemoMode { kPixelShuffle, kHaar, kRandom, kLearnL1 };
DemoMode parse_demo_mode(const std::string& name);
std::string demo_mode_name(DemoMode mode);

struct DemoOptions {
  std::optional<std::filesystem::path> image;  // PGM; a built-in image otherwise
  DemoMode mode = DemoMode::kPixelShuffle;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t steps = 200;  // learn-l1 only
  double lr = 0.01;         // learn-l1 only
  bool inverse_constant = false;
};

struct DemoResult {
  Tensor input;     // 1 x H x W
  Tensor channels;  // 4 x H/2 x W/2 after downsampling
  Tensor theta;     // 4 x 4 parameter used (as a 1 x 4 x 4 tensor)
  std::vector<double> l1;              // learn-l1: ||D x||_1 per step, initial first
  std::vector<double> orthogonality;   // learn-l1: ||M^T M - I||_F per step
  Tensor checkerboard;                 // with inverse_constant
  std::vector<std::filesystem::path> files;
};

/// Smooth synthetic test image: a blurred foam phantom over a low-frequency
/// sinusoidal background, values in [0, 1].
Tensor builtin_demo_image(std::size_t size, std::uint64_t seed);
DemoResult cmd_downsample_demo(const DemoOptions& opts, std::ostream& out);

// ---------------------------------------------------------------------------
// train-denoise

struct DenoiseRunConfig {
  IUNetConfig net;
  DenoiseConfig data;
  std::size_t train_count = 32;
  std::size_t test_count = 8;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  AdamConfig adam{5e-3};
  std::uint64_t seed = 1;
};

DenoiseRunConfig default_denoise_config();
DenoiseRunConfig denoise_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DenoiseRunConfig& cfg);

struct DenoiseEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean squared error over the training set
  double train_psnr = 0.0;
  double test_psnr = 0.0;        // network output vs clean
  double test_psnr_input = 0.0;  // degraded input vs clean
};

struct DenoiseResult {
  std::vector<DenoiseEpoch> epochs;  // epoch 0 is the untrained network
};

/// Writes denoise_metrics.csv, denoise.ckpt and example PGMs to out_dir.
DenoiseResult cmd_train_denoise(const DenoiseRunConfig& cfg,
                                const std::filesystem::path& out_dir, std::ostream& out);

// ---------------------------------------------------------------------------
// train-flow

struct FlowRunConfig {
  IUNetConfig net;
  std::optional<StrideSpec> pre_shuffle;
  GaussianMixture2 mixture;
  std::size_t train_count = 1000;
  std::size_t val_count = 200;
  std::size_t sample_count = 2000;
  FlowTrainConfig train;
  std::uint64_t seed = 1;
};

FlowRunConfig default_flow_config();
FlowRunConfig flow_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FlowRunConfig& cfg);

struct FlowRunResult {
  FlowTrainLog log;
  std::vector<double> sample_mean;   // per data coordinate
  std::array<double, 2> channel_mean{};  // sample mean per channel
};

/// Writes flow_metrics.csv, flow.ckpt and flow_samples.pgm to out_dir.
FlowRunResult cmd_train_flow(const FlowRunConfig& cfg, const std::filesystem::path& out_dir,
                             std::ostream& out);

// ---------------------------------------------------------------------------
// bench-memory

struct BenchConfig {
  IUNetConfig net;  // couplings_per_block is replaced by each depth
  std::vector<std::size_t> depths{5, 10, 20};
  std::uint64_t seed = 1;
};

BenchConfig default_bench_config();
BenchConfig bench_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchConfig& cfg);

struct BenchRow {
  std::size_t delta = 0;
  std::size_t peak_me_bytes = 0;
  std::size_t peak_conv_bytes = 0;
  double ratio = 0.0;  // peak_me / peak_conv
  double time_me_s = 0.0;
  double time_conv_s = 0.0;
  std::size_t me_tensors = 0;
  std::size_t conv_tensors = 0;
  long max_rss_kb = -1;  // process-wide, -1 when unavailable
};

struct BenchResult {
  std::vector<BenchRow> rows;
  bool ratio_decreasing = false;
  bool me_tensors_constant = false;
  bool me_slower = false;
  bool ok() const { return ratio_decreasing && me_tensors_constant; }
};

/// Writes bench_memory.csv to out_dir.
BenchResult cmd_bench_memory(const BenchConfig& cfg, const std::filesystem::path& out_dir,
                             std::ostream& out);

}  // namespace iunet::cli
