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


// `iunet downsample-demo`: the four channels produced by a 2x2 orthogonal
// downsampling of a grayscale image, for the fixed pixel-shuffle and Haar
// kernels, a random kernel, or one learned to minimize the l1 norm.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "common.hpp"
#include "iunet/cli.hpp"
#include "iunet/csv.hpp"
#include "iunet/data.hpp"
#include "iunet/linalg.hpp"
#include "iunet/resample.hpp"
#include "iunet/rng.hpp"

namespace iunet::cli {

namespace {

const StrideSpec kStride{2, 2};

double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += std::abs(v);
  return s;
}

Tensor sign_of(const Tensor& t) {
  Tensor s = t;
  for (double& v : s.data()) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return s;
}

/// Writes `t` tiled two channels per row, scaled by its own min and max.
void write_tiles(const std::filesystem::path& path, const Tensor& t) {
  const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  const Tensor tiles = t.channels() == 1 ? t : tile_channels(t, 2);
  write_pgm(path, tiles, *lo, *hi > *lo ? *hi : *lo + 1.0);
}

nlohmann::json options_json(const DemoOptions& o) {
  return {{"mode", demo_mode_name(o.mode)},
          {"image", o.image ? o.image->string() : std::string("builtin")},
          {"seed", o.seed},
          {"steps", o.steps},
          {"lr", o.lr},
          {"inverse_constant", o.inverse_constant}};
}

}  // namespace

DemoMode parse_demo_mode(const std::string& name) {
  if (name == "pixelshuffle") return DemoMode::kPixelShuffle;
  if (name == "haar") return DemoMode::kHaar;
  if (name == "random") return DemoMode::kRandom;
  if (name == "learn-l1") return DemoMode::kLearnL1;
  throw ConfigError("unknown demo mode \"" + name +
                    "\" (expected pixelshuffle, haar, random or learn-l1)");
}

std::string demo_mode_name(DemoMode mode) {
  switch (mode) {
    case DemoMode::kPixelShuffle: return "pixelshuffle";
    case DemoMode::kHaar: return "haar";
    case DemoMode::kRandom: return "random";
    case DemoMode::kLearnL1: return "learn-l1";
  }
  return "?";
}

Tensor builtin_demo_image(std::size_t size, std::uint64_t seed) {
  const FoamPhantom2D foam = gen_foam2d(seed, size, 8);
  // Soften the edges so the image has a mix of flat regions and gradients.
  const Tensor soft = degrade(foam.image, 0.0, 1.5, seed).degraded;
  Tensor img(1, {size, size});
  const double n = static_cast<double>(size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double bg = 0.15 + 0.1 * std::sin(2.0 * std::numbers::pi * (r + 0.5 * c) / n);
      img[r * size + c] = std::clamp(0.2 * bg + 0.75 * soft[r * size + c] + 0.05, 0.0, 1.0);
    }
  }
  return img;
}

DemoResult cmd_downsample_demo(const DemoOptions& opts, std::ostream& out) {
  DemoResult res;
  res.input = opts.image ? read_pgm(*opts.image) : builtin_demo_image(64, opts.seed);
  const auto& ext = res.input.spatial();
  if (ext.size() != 2 || ext[0] % 2 != 0 || ext[1] % 2 != 0) {
    throw ShapeError("demo image extents " + res.input.shape_string() +
                     " are not divisible by 2");
  }
  detail::ensure_dir(opts.out_dir);
  const std::string name = demo_mode_name(opts.mode);
  const std::string hash = config_hash(options_json(opts));

  ResampleOp op = make_pixel_shuffle(kStride, 1);
  if (opts.mode == DemoMode::kHaar) op.thetas = {detail::haar_theta()};
  if (opts.mode == DemoMode::kRandom || opts.mode == DemoMode::kLearnL1) {
    Rng rng(opts.seed);
    op = make_resample(kStride, 1, true, ResampleMode::kDown, rng, 1.0);
  }

  if (opts.mode == DemoMode::kLearnL1) {
    if (!(opts.lr > 0.0)) throw ConfigError("lr must be positive");
    CsvWriter csv(opts.out_dir / "learn_l1.csv", {"step", "l1", "orthogonality_error", "config_hash"});
    double current = l1_norm(down_forward(op, res.input));
    auto record = [&](std::size_t step) {
      const double orth = orthogonality_error(op.orthogonal_matrices().front());
      res.l1.push_back(current);
      res.orthogonality.push_back(orth);
      csv.row({CsvWriter::num(step), CsvWriter::num(current), CsvWriter::num(orth), hash});
    };
    record(0);
    // Normalized gradient steps on the subgradient sign(D x); a step that does
    // not lower the norm is retried at half the length, so the recorded
    // trajectory is strictly decreasing.
    double step_len = opts.lr;
    for (std::size_t step = 1; step <= opts.steps; ++step) {
      const Matrix g = grad_theta(op, res.input, sign_of(down_forward(op, res.input))).front();
      const double gn = g.frobenius_norm();
      if (!(gn > 0.0)) break;
      const Matrix theta = op.thetas.front();
      bool improved = false;
      for (int tries = 0; tries < 40 && !improved; ++tries) {
        op.thetas.front() = theta - g * (step_len / gn);
        const double next = l1_norm(down_forward(op, res.input));
        if (next < current) {
          current = next;
          improved = true;
        } else {
          step_len *= 0.5;
        }
      }
      if (!improved) {
        op.thetas.front() = theta;
        out << "learn-l1: no further decrease after step " << step - 1 << "\n";
        break;
      }
      record(step);
    }
    out << "learn-l1: l1 " << res.l1.front() << " -> " << res.l1.back() << " in "
        << res.l1.size() - 1 << " steps\n";
  }

  res.theta = Tensor(1, {4, 4});
  std::copy(op.thetas.front().data().begin(), op.thetas.front().data().end(),
            res.theta.data().begin());
  res.channels = down_forward(op, res.input);

  const auto input_path = opts.out_dir / "input.pgm";
  write_pgm(input_path, res.input);
  const auto tiles_path = opts.out_dir / (name + "_channels.pgm");
  write_tiles(tiles_path, res.channels);
  res.files = {input_path, tiles_path};

  if (opts.inverse_constant) {
    // Four constant channels pushed through the inverse operator.
    Tensor y(4, {ext[0] / 2, ext[1] / 2});
    for (std::size_t c = 0; c < 4; ++c) {
      for (double& v : y.channel(c)) v = 0.25 * static_cast<double>(c + 1);
    }
    res.checkerboard = up_forward(op, y);
    const auto path = opts.out_dir / (name + "_inverse_constant.pgm");
    write_tiles(path, res.checkerboard);
    res.files.push_back(path);
  }
  for (const auto& f : res.files) out << "wrote " << f.string() << "\n";
  return res;
}

}  // namespace iunet::cli
