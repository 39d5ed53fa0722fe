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

#include "iunet/tensor_io.hpp"

#include <fstream>
#include <json.hpp>

#include "binary_io.hpp"
#include "iunet/error.hpp"

namespace iunet {

namespace {
constexpr const char* kLayout = "channel-first-row-major";

std::filesystem::path sidecar(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}
}  // namespace

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  detail::write_f64s(os, t.data());
  nlohmann::json meta;
  meta["shape"] = t.shape();
  meta["dtype"] = "f64";
  meta["layout"] = kLayout;
  std::ofstream js(sidecar(path));
  js << meta.dump() << '\n';
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream js(sidecar(path));
  if (!js) throw CorruptFileError("missing tensor sidecar " + sidecar(path).string());
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("bad tensor sidecar: " + std::string(e.what()));
  }
  if (meta.value("dtype", "") != "f64" || meta.value("layout", "") != kLayout ||
      !meta.contains("shape") || !meta["shape"].is_array() || meta["shape"].size() < 2) {
    throw CorruptFileError("unsupported tensor sidecar " + meta.dump());
  }
  auto shape = meta["shape"].get<std::vector<std::size_t>>();
  Tensor t(shape[0], std::vector<std::size_t>(shape.begin() + 1, shape.end()));
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open tensor payload " + path.string());
  detail::read_f64s(is, t.data(), "tensor payload");
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CorruptFileError("tensor payload longer than its shape " + t.shape_string());
  }
  return t;
}

}  // namespace iunet
