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
#include <vector>

namespace iunet {

/// Named view onto one parameter array. Networks expose their parameters
/// as an ordered list of these; gradient containers produce the same list
/// so the two can be zipped by position.
template <class T>
struct BasicParamSlot {
  std::string path;
  std::vector<std::size_t> shape;
  std::span<T> data;
};

using ParamSlot = BasicParamSlot<double>;
using ConstParamSlot = BasicParamSlot<const double>;

/// Owning copy of a named parameter (or gradient) array.
struct NamedArray {
  std::string path;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

template <class T>
std::vector<NamedArray> to_named_arrays(const std::vector<BasicParamSlot<T>>& slots) {
  std::vector<NamedArray> out;
  out.reserve(slots.size());
  for (const auto& s : slots) {
    out.push_back({s.path, s.shape, std::vector<double>(s.data.begin(), s.data.end())});
  }
  return out;
}

}  // namespace iunet
