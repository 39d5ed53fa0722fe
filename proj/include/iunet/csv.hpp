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

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace iunet {

/// Minimal CSV output: header row first, LF line endings, no quoting (all
/// fields are numbers or identifiers).
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : os_(path, std::ios::trunc), columns_(header.size()) {
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    write(header);
  }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw std::logic_error("CSV row has the wrong width");
    write(fields);
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
  }
  static std::string num(std::size_t v) { return std::to_string(v); }

 private:
  void write(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os_ << (i ? "," : "") << fields[i];
    os_ << '\n';
    os_.flush();
  }

  std::ofstream os_;
  std::size_t columns_;
};

/// 64-bit FNV-1a of `text`, as 16 hex digits. Used to tag CSV rows with the
/// configuration that produced them.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace iunet
