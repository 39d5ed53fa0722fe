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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "iunet/tensor.hpp"

namespace iunet {

// ---------------------------------------------------------------------------
// Foam phantoms: a solid disk (value 1) on background 0, with non-overlapping
// circular holes (value 0) fully inside the disk. Coordinates are in pixels,
// pixel (r, c) is sampled at its center (r + 0.5, c + 0.5).

struct Circle {
  double cy = 0.0;
  double cx = 0.0;
  double r = 0.0;
};

struct FoamPhantom2D {
  std::size_t size = 0;
  Circle disk;
  std::vector<Circle> holes;
  Tensor image;  // 1 x size x size
};

/// Hole radii are drawn from [0.03, 0.08] * size. Each hole gets at most
/// kFoamAttemptsPerHole rejection-sampling attempts before GenerationError.
inline constexpr int kFoamAttemptsPerHole = 2000;
FoamPhantom2D gen_foam2d(std::uint64_t seed, std::size_t size, std::size_t hole_count);

struct NoisySample {
  Tensor clean;
  Tensor degraded;
  std::uint64_t seed = 0;
};

/// Gaussian blur with standard deviation `blur_sigma` pixels (edges
/// replicated; 0 disables it), then additive N(0, noise_sigma^2) noise.
/// Input is C x H x W.
NoisySample degrade(const Tensor& clean, double noise_sigma, double blur_sigma,
                    std::uint64_t seed);

struct DenoiseConfig {
  std::size_t size = 64;
  std::size_t holes = 20;
  double noise_sigma = 0.1;
  double blur_sigma = 1.0;
};

/// count phantoms and their degraded versions, sample k seeded from
/// (seed, k).
std::vector<NoisySample> gen_denoise_dataset(std::size_t count, const DenoiseConfig& cfg,
                                             std::uint64_t seed);

struct Psnr {
  double db = 0.0;       // +inf when identical
  bool identical = false;
};

/// 10 log10(peak^2 / MSE).
Psnr psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// ---------------------------------------------------------------------------
// Gaussian-mixture toy data for the flow: every pixel's channel vector is an
// independent draw from a two-component mixture in R^2.

struct GaussianMixture2 {
  std::array<double, 2> weights{0.5, 0.5};
  std::array<std::array<double, 2>, 2> means{{{-2.0, 1.0}, {2.0, 3.0}}};
  double stddev = 0.5;

  std::array<double, 2> mean() const;
  /// Exact log density of one 2-vector.
  double log_density(double a, double b) const;
};

/// count tensors of shape 2 x spatial.
BatchTensor gen_mixture_dataset(std::size_t count, const std::vector<std::size_t>& spatial,
                                std::uint64_t seed, const GaussianMixture2& mix = {});

// ---------------------------------------------------------------------------
// Images

/// 8-bit binary PGM. Values are mapped linearly from [lo, hi] to [0, 255]
/// and clipped.
void write_pgm(const std::filesystem::path& path, const Tensor& image, double lo = 0.0,
               double hi = 1.0);
/// Reads P5 with maxval <= 255 into a 1 x H x W tensor scaled to [0, 1].
Tensor read_pgm(const std::filesystem::path& path);

/// Lays the channels of a C x H x W tensor out as a grid with `cols`
/// columns and `gap` pixels of `fill` between tiles.
Tensor tile_channels(const Tensor& x, std::size_t cols, std::size_t gap = 0,
                     double fill = 0.0);

}  // namespace iunet
