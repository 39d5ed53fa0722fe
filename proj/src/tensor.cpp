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

#include "iunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "iunet/error.hpp"

namespace iunet {

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (std::size_t e : v) p *= e;
  return p;
}

void check_extents(std::size_t channels, const std::vector<std::size_t>& spatial) {
  if (channels == 0) throw ShapeError("tensor needs at least one channel");
  if (spatial.empty() || spatial.size() > 3) {
    throw ShapeError("tensor spatial rank must be 1 to 3");
  }
  for (std::size_t e : spatial) {
    if (e == 0) throw ShapeError("tensor spatial extents must be >= 1");
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shapes " + a.shape_string() + " and " +
                     b.shape_string() + " differ");
  }
}

}  // namespace

Tensor::Tensor(std::size_t channels, std::vector<std::size_t> spatial, double fill)
    : channels_(channels), spatial_(std::move(spatial)) {
  check_extents(channels_, spatial_);
  spatial_size_ = product(spatial_);
  values_.assign(channels_ * spatial_size_, fill);
}

Tensor::Tensor(std::size_t channels, std::vector<std::size_t> spatial,
               std::vector<double> values)
    : channels_(channels), spatial_(std::move(spatial)), values_(std::move(values)) {
  check_extents(channels_, spatial_);
  spatial_size_ = product(spatial_);
  if (values_.size() != channels_ * spatial_size_) {
    throw ShapeError("tensor payload has " + std::to_string(values_.size()) +
                     " values, shape " + shape_string() + " needs " +
                     std::to_string(channels_ * spatial_size_));
  }
}

std::vector<std::size_t> Tensor::shape() const {
  std::vector<std::size_t> s{channels_};
  s.insert(s.end(), spatial_.begin(), spatial_.end());
  return s;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << channels_;
  for (std::size_t e : spatial_) os << 'x' << e;
  return os.str();
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same(*this, o, "tensor add");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  require_same(*this, o, "tensor subtract");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double a) {
  for (double& v : values_) v *= a;
  return *this;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same(a, b, "dot");
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += da[i] * db[i];
  return acc;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b, "max_abs_diff");
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

double relative_error(const Tensor& a, const Tensor& b) {
  require_same(a, b, "relative_error");
  double num = 0.0;
  double den = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    num += (da[i] - db[i]) * (da[i] - db[i]);
    den += db[i] * db[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), std::numeric_limits<double>::min());
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > x.channels()) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     x.shape_string());
  }
  auto src = x.data().subspan(begin * x.spatial_size(), count * x.spatial_size());
  return Tensor(count, x.spatial(), std::vector<double>(src.begin(), src.end()));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.spatial() != b.spatial()) {
    throw ShapeError("concat_channels: spatial extents of " + a.shape_string() +
                     " and " + b.shape_string() + " differ");
  }
  std::vector<double> v;
  v.reserve(a.numel() + b.numel());
  v.insert(v.end(), a.data().begin(), a.data().end());
  v.insert(v.end(), b.data().begin(), b.data().end());
  return Tensor(a.channels() + b.channels(), a.spatial(), std::move(v));
}

Tensor batch_mean(const BatchTensor& batch) {
  if (batch.samples.empty()) throw ShapeError("batch_mean of an empty batch");
  Tensor acc = batch.samples.front();
  for (std::size_t i = 1; i < batch.samples.size(); ++i) acc += batch.samples[i];
  acc *= 1.0 / static_cast<double>(batch.samples.size());
  return acc;
}

}  // namespace iunet
