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
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace iunet {

/// Channel-first float64 array C x N_1 x ... x N_d, stored contiguously
/// with row-major spatial layout.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t channels, std::vector<std::size_t> spatial, double fill = 0.0);
  Tensor(std::size_t channels, std::vector<std::size_t> spatial,
         std::vector<double> values);

  static Tensor zeros_like(const Tensor& t) {
    return Tensor(t.channels(), t.spatial());
  }

  std::size_t channels() const { return channels_; }
  const std::vector<std::size_t>& spatial() const { return spatial_; }
  std::size_t dim() const { return spatial_.size(); }
  std::size_t spatial_size() const { return spatial_size_; }
  std::size_t numel() const { return values_.size(); }
  std::size_t bytes() const { return values_.size() * sizeof(double); }
  bool empty() const { return values_.empty(); }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(values_).subspan(c * spatial_size_, spatial_size_);
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(values_).subspan(c * spatial_size_,
                                                    spatial_size_);
  }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Shape as {C, N_1, ..., N_d}.
  std::vector<std::size_t> shape() const;
  std::string shape_string() const;
  bool same_shape(const Tensor& o) const {
    return channels_ == o.channels_ && spatial_ == o.spatial_;
  }
  bool all_finite() const;

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double a);
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }
  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t channels_ = 0;
  std::vector<std::size_t> spatial_;
  std::size_t spatial_size_ = 0;
  std::vector<double> values_;
};

double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
/// ||a - b|| / max(||b||, tiny).
double relative_error(const Tensor& a, const Tensor& b);

/// Channels [begin, begin + count).
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
/// Stacks a over b along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Mini-batch carrier. Core ops are per-sample; this maps them.
struct BatchTensor {
  std::vector<Tensor> samples;

  std::size_t size() const { return samples.size(); }
  template <class Fn>
  BatchTensor map(Fn&& fn) const {
    BatchTensor out;
    out.samples.reserve(samples.size());
    for (const Tensor& t : samples) out.samples.push_back(fn(t));
    return out;
  }
};

/// Sample-order mean, deterministic summation order.
Tensor batch_mean(const BatchTensor& batch);

}  // namespace iunet
