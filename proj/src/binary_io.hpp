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

// Little-endian primitive encoding shared by the tensor and checkpoint
// file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "iunet/error.hpp"

namespace iunet::detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <class T>
void write_le(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CorruptFileError(std::string("unexpected end of file reading ") + what);
  }
  return to_little(v);
}

inline void write_f64s(std::ostream& os, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) write_le(os, v);
  }
}

inline void read_f64s(std::istream& is, std::span<double> out, const char* what) {
  if (!is.read(reinterpret_cast<char*>(out.data()),
               static_cast<std::streamsize>(out.size_bytes()))) {
    throw CorruptFileError(std::string("unexpected end of file reading ") + what);
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (double& v : out) v = to_little(v);
  }
}

}  // namespace iunet::detail
