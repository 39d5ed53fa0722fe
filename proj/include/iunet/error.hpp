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

#include <stdexcept>
#include <string>

namespace iunet {

/// Tensor or matrix extents do not fit the operation.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An architecture or run configuration violates its invariants.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or an inversion whose round trip drifted too far.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint or tensor file could not be parsed.
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API was called out of order (e.g. a backward pass without its tape).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling could not satisfy the generator constraints.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iunet
