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
#include <initializer_list>
#include <string>
#include <vector>

namespace iunet {

/// Per-axis stride of an invertible resampling. The kernel extent always
/// equals the stride, so the product of the entries is the channel
/// multiplier.
class StrideSpec {
 public:
  StrideSpec() = default;
  StrideSpec(std::initializer_list<std::size_t> s);
  explicit StrideSpec(std::vector<std::size_t> s);

  /// A stride of `value` along each of `dim` axes.
  static StrideSpec uniform(std::size_t dim, std::size_t value);

  std::size_t dim() const { return s_.size(); }
  std::size_t operator[](std::size_t axis) const { return s_[axis]; }
  const std::vector<std::size_t>& values() const { return s_; }
  std::size_t sigma() const;

  /// Strides padded with leading ones to three axes.
  std::array<std::size_t, 3> canonical() const;

  std::string to_string() const;

  friend bool operator==(const StrideSpec&, const StrideSpec&) = default;

 private:
  void validate() const;
  std::vector<std::size_t> s_;
};

/// Pads spatial extents with leading ones to three axes. Row-major
/// flattening is unchanged by this, which lets every kernel loop over a
/// fixed 3-d index space.
std::array<std::size_t, 3> canonical_extents(
    const std::vector<std::size_t>& spatial);

}  // namespace iunet
