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


#include "iunet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include "iunet/error.hpp"
#include "iunet/rng.hpp"

namespace iunet {

// ---------------------------------------------------------------------------
// foam

namespace {

double dist(double y0, double x0, double y1, double x1) { return std::hypot(y0 - y1, x0 - x1); }

bool inside(const Circle& c, double y, double x) { return dist(c.cy, c.cx, y, x) <= c.r; }

}  // namespace

FoamPhantom2D gen_foam2d(std::uint64_t seed, std::size_t size, std::size_t hole_count) {
  if (size < 4) throw GenerationError("phantom size must be at least 4");
  Rng rng(seed);
  const double n = static_cast<double>(size);
  FoamPhantom2D p;
  p.size = size;
  p.disk.cy = n * (0.5 + rng.uniform(-0.03, 0.03));
  p.disk.cx = n * (0.5 + rng.uniform(-0.03, 0.03));
  p.disk.r = n * rng.uniform(0.38, 0.45);

  for (std::size_t h = 0; h < hole_count; ++h) {
    bool placed = false;
    for (int attempt = 0; attempt < kFoamAttemptsPerHole && !placed; ++attempt) {
      Circle c;
      c.r = n * rng.uniform(0.03, 0.08);
      c.cy = p.disk.cy + rng.uniform(-p.disk.r, p.disk.r);
      c.cx = p.disk.cx + rng.uniform(-p.disk.r, p.disk.r);
      if (dist(c.cy, c.cx, p.disk.cy, p.disk.cx) + c.r > p.disk.r) continue;
      placed = std::none_of(p.holes.begin(), p.holes.end(), [&](const Circle& o) {
        return dist(c.cy, c.cx, o.cy, o.cx) < c.r + o.r;
      });
      if (placed) p.holes.push_back(c);
    }
    if (!placed) {
      throw GenerationError("could not place hole " + std::to_string(h + 1) + " of " +
                            std::to_string(hole_count) + " in a " + std::to_string(size) +
                            "x" + std::to_string(size) + " phantom after " +
                            std::to_string(kFoamAttemptsPerHole) + " attempts");
    }
  }

  p.image = Tensor(1, {size, size});
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double y = static_cast<double>(r) + 0.5, x = static_cast<double>(c) + 0.5;
      bool solid = inside(p.disk, y, x);
      for (const Circle& hole : p.holes) {
        if (!solid) break;
        solid = !inside(hole, y, x);
      }
      p.image[r * size + c] = solid ? 1.0 : 0.0;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// degradation

namespace {

std::vector<double> gaussian_taps(double sigma) {
  const int w = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * w + 1);
  double sum = 0.0;
  for (int j = -w; j <= w; ++j) {
    k[j + w] = std::exp(-0.5 * j * j / (sigma * sigma));
    sum += k[j + w];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// 1-D convolution along one axis of an H x W plane with replicated edges.
void blur_axis(std::span<double> plane, std::size_t h, std::size_t w,
               const std::vector<double>& taps, bool along_rows) {
  const int half = static_cast<int>(taps.size() / 2);
  const std::size_t len = along_rows ? w : h;
  const std::size_t lines = along_rows ? h : w;
  std::vector<double> line(len);
  for (std::size_t l = 0; l < lines; ++l) {
    auto at = [&](std::size_t i) -> double& {
      return along_rows ? plane[l * w + i] : plane[i * w + l];
    };
    for (std::size_t i = 0; i < len; ++i) line[i] = at(i);
    for (std::size_t i = 0; i < len; ++i) {
      double acc = 0.0;
      for (int j = -half; j <= half; ++j) {
        const long src = std::clamp<long>(static_cast<long>(i) + j, 0, static_cast<long>(len) - 1);
        acc += taps[j + half] * line[src];
      }
      at(i) = acc;
    }
  }
}

}  // namespace

NoisySample degrade(const Tensor& clean, double noise_sigma, double blur_sigma,
                    std::uint64_t seed) {
  if (clean.dim() != 2) throw ShapeError("degrade expects a C x H x W image");
  if (!(noise_sigma >= 0.0) || !(blur_sigma >= 0.0)) {
    throw ConfigError("noise and blur levels must be non-negative");
  }
  NoisySample s{clean, clean, seed};
  const std::size_t h = clean.spatial()[0], w = clean.spatial()[1];
  if (blur_sigma > 0.0) {
    const auto taps = gaussian_taps(blur_sigma);
    for (std::size_t c = 0; c < clean.channels(); ++c) {
      blur_axis(s.degraded.channel(c), h, w, taps, true);
      blur_axis(s.degraded.channel(c), h, w, taps, false);
    }
  }
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    for (double& v : s.degraded.data()) v += noise_sigma * rng.normal();
  }
  return s;
}

std::vector<NoisySample> gen_denoise_dataset(std::size_t count, const DenoiseConfig& cfg,
                                             std::uint64_t seed) {
  const Rng root(seed);
  std::vector<NoisySample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng = root.fork(k);
    const std::uint64_t phantom_seed = rng.next_u64();
    const std::uint64_t noise_seed = rng.next_u64();
    const FoamPhantom2D p = gen_foam2d(phantom_seed, cfg.size, cfg.holes);
    out.push_back(degrade(p.image, cfg.noise_sigma, cfg.blur_sigma, noise_seed));
  }
  return out;
}

Psnr psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!a.same_shape(b)) {
    throw ShapeError("psnr of " + a.shape_string() + " and " + b.shape_string());
  }
  if (!(peak > 0.0)) throw ConfigError("psnr peak must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0.0) return {std::numeric_limits<double>::infinity(), true};
  const double mse = se / static_cast<double>(a.numel());
  return {10.0 * std::log10(peak * peak / mse), false};
}

// ---------------------------------------------------------------------------
// mixture

std::array<double, 2> GaussianMixture2::mean() const {
  const double wsum = weights[0] + weights[1];
  return {(weights[0] * means[0][0] + weights[1] * means[1][0]) / wsum,
          (weights[0] * means[0][1] + weights[1] * means[1][1]) / wsum};
}

double GaussianMixture2::log_density(double a, double b) const {
  const double wsum = weights[0] + weights[1];
  const double var = stddev * stddev;
  double terms[2];
  for (int k = 0; k < 2; ++k) {
    const double d2 = (a - means[k][0]) * (a - means[k][0]) + (b - means[k][1]) * (b - means[k][1]);
    terms[k] = std::log(weights[k] / wsum) - std::log(2.0 * std::numbers::pi * var) -
               0.5 * d2 / var;
  }
  const double hi = std::max(terms[0], terms[1]);
  return hi + std::log(std::exp(terms[0] - hi) + std::exp(terms[1] - hi));
}

BatchTensor gen_mixture_dataset(std::size_t count, const std::vector<std::size_t>& spatial,
                                std::uint64_t seed, const GaussianMixture2& mix) {
  Rng rng(seed);
  const double p0 = mix.weights[0] / (mix.weights[0] + mix.weights[1]);
  BatchTensor out;
  out.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Tensor t(2, spatial);
    const std::size_t n = t.spatial_size();
    for (std::size_t p = 0; p < n; ++p) {
      const auto& mu = rng.uniform() < p0 ? mix.means[0] : mix.means[1];
      t[p] = rng.normal(mu[0], mix.stddev);
      t[n + p] = rng.normal(mu[1], mix.stddev);
    }
    out.samples.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// images

void write_pgm(const std::filesystem::path& path, const Tensor& image, double lo, double hi) {
  if (image.channels() != 1 || image.dim() != 2) {
    throw ShapeError("write_pgm expects a 1 x H x W image, got " + image.shape_string());
  }
  if (!(hi > lo)) throw ConfigError("write_pgm needs hi > lo");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::size_t h = image.spatial()[0], w = image.spatial()[1];
  os << "P5\n" << w << " " << h << "\n255\n";
  std::string bytes(h * w, '\0');
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = std::clamp((image[i] - lo) / (hi - lo), 0.0, 1.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

namespace {

std::size_t read_header_int(std::istream& is, const std::string& what) {
  while (true) {
    const int c = is.peek();
    if (c == '#') {
      std::string comment;
      std::getline(is, comment);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(is >> v)) throw CorruptFileError("malformed PGM header (" + what + ")");
  return v;
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open " + path.string());
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') {
    throw CorruptFileError(path.string() + " is not a binary PGM (P5)");
  }
  const std::size_t w = read_header_int(is, "width");
  const std::size_t h = read_header_int(is, "height");
  const std::size_t maxval = read_header_int(is, "maxval");
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw CorruptFileError("unsupported PGM header in " + path.string());
  }
  is.get();  // single whitespace before the raster
  std::string bytes(w * h, '\0');
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw CorruptFileError("truncated PGM raster in " + path.string());
  }
  Tensor t(1, {h, w});
  for (std::size_t i = 0; i < w * h; ++i) {
    t[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / static_cast<double>(maxval);
  }
  return t;
}

Tensor tile_channels(const Tensor& x, std::size_t cols, std::size_t gap, double fill) {
  if (x.dim() != 2) throw ShapeError("tile_channels expects C x H x W");
  if (cols == 0) throw ConfigError("tile_channels needs at least one column");
  const std::size_t c = x.channels(), h = x.spatial()[0], w = x.spatial()[1];
  const std::size_t rows = (c + cols - 1) / cols;
  const std::size_t H = rows * h + (rows - 1) * gap, W = cols * w + (cols - 1) * gap;
  Tensor out(1, {H, W}, fill);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t r0 = (ch / cols) * (h + gap), c0 = (ch % cols) * (w + gap);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) out[(r0 + r) * W + c0 + q] = x[(ch * h + r) * w + q];
    }
  }
  return out;
}

}  // namespace iunet
