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

#include "iunet/stride.hpp"

#include <sstream>

#include "iunet/error.hpp"

namespace iunet {

StrideSpec::StrideSpec(std::initializer_list<std::size_t> s) : s_(s) { validate(); }

StrideSpec::StrideSpec(std::vector<std::size_t> s) : s_(std::move(s)) { validate(); }

StrideSpec StrideSpec::uniform(std::size_t dim, std::size_t value) {
  return StrideSpec(std::vector<std::size_t>(dim, value));
}

void StrideSpec::validate() const {
  if (s_.empty() || s_.size() > 3) {
    throw ShapeError("stride must have 1 to 3 axes, got " +
                     std::to_string(s_.size()));
  }
  for (std::size_t v : s_) {
    if (v == 0) throw ShapeError("stride entries must be positive");
  }
  if (sigma() < 2) {
    throw ShapeError("channel multiplier of stride " + to_string() +
                     " must be at least 2");
  }
}

std::size_t StrideSpec::sigma() const {
  std::size_t p = 1;
  for (std::size_t v : s_) p *= v;
  return p;
}

std::array<std::size_t, 3> StrideSpec::canonical() const {
  std::array<std::size_t, 3> out{1, 1, 1};
  const std::size_t off = 3 - s_.size();
  for (std::size_t i = 0; i < s_.size(); ++i) out[off + i] = s_[i];
  return out;
}

std::string StrideSpec::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s_.size(); ++i) os << (i ? "," : "") << s_[i];
  os << ')';
  return os.str();
}

std::array<std::size_t, 3> canonical_extents(
    const std::vector<std::size_t>& spatial) {
  if (spatial.empty() || spatial.size() > 3) {
    throw ShapeError("spatial rank must be 1 to 3");
  }
  std::array<std::size_t, 3> out{1, 1, 1};
  const std::size_t off = 3 - spatial.size();
  for (std::size_t i = 0; i < spatial.size(); ++i) out[off + i] = spatial[i];
  return out;
}

}  // namespace iunet
