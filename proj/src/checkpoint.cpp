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


#include "iunet/checkpoint.hpp"

#include <fstream>
#include <map>
#include <string>

#include "binary_io.hpp"
#include "iunet/error.hpp"

namespace iunet {

namespace {

using detail::read_le;
using detail::write_le;

constexpr char kMagic[4] = {'I', 'U', 'N', 'T'};

std::string read_string(std::istream& is, std::uint64_t n, std::uint64_t remaining,
                        const char* what) {
  if (n > remaining) throw CorruptFileError(std::string("truncated checkpoint reading ") + what);
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CorruptFileError(std::string("truncated checkpoint reading ") + what);
  }
  return s;
}

struct Contents {
  nlohmann::json config;
  std::map<std::string, NamedArray> records;
};

Contents read_contents(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open checkpoint " + path.string());
  const std::uint64_t size = std::filesystem::file_size(path);
  auto remaining = [&]() -> std::uint64_t {
    const auto pos = is.tellg();
    return pos < 0 ? 0 : size - static_cast<std::uint64_t>(pos);
  };

  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw CorruptFileError(path.string() + " is not an iUNet checkpoint");
  }
  const auto version = read_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw CorruptFileError("checkpoint version " + std::to_string(version) +
                           " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
  }
  Contents c;
  const auto json_len = read_le<std::uint64_t>(is, "config length");
  try {
    c.config = nlohmann::json::parse(read_string(is, json_len, remaining(), "config"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const auto count = read_le<std::uint64_t>(is, "record count");
  for (std::uint64_t r = 0; r < count; ++r) {
    NamedArray a;
    const auto path_len = read_le<std::uint32_t>(is, "record path length");
    a.path = read_string(is, path_len, remaining(), "record path");
    const auto rank = read_le<std::uint32_t>(is, "record rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto e = read_le<std::uint64_t>(is, "record shape");
      a.shape.push_back(e);
      n *= e;
    }
    if (n * sizeof(double) > remaining()) {
      throw CorruptFileError("truncated checkpoint reading " + a.path);
    }
    a.values.resize(n);
    detail::read_f64s(is, a.values, "record values");
    if (!c.records.emplace(a.path, a).second) {
      throw CorruptFileError("duplicate checkpoint record " + a.path);
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CorruptFileError("trailing bytes after the last checkpoint record");
  }
  return c;
}

void fill(IUNet& net, const Contents& c) {
  auto slots = params(net);
  if (slots.size() != c.records.size()) {
    throw CorruptFileError("checkpoint holds " + std::to_string(c.records.size()) +
                           " records, the network has " + std::to_string(slots.size()));
  }
  for (auto& slot : slots) {
    const auto it = c.records.find(slot.path);
    if (it == c.records.end()) throw CorruptFileError("checkpoint lacks record " + slot.path);
    if (it->second.shape != slot.shape) {
      throw CorruptFileError("checkpoint record " + slot.path + " has the wrong shape");
    }
    std::copy(it->second.values.begin(), it->second.values.end(), slot.data.begin());
  }
}

}  // namespace

void save_checkpoint(const IUNet& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string config = to_json(net.cfg).dump();
  write_le<std::uint64_t>(os, config.size());
  os.write(config.data(), static_cast<std::streamsize>(config.size()));
  const auto slots = params(net);
  write_le<std::uint64_t>(os, slots.size());
  for (const auto& s : slots) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.path.size()));
    os.write(s.path.data(), static_cast<std::streamsize>(s.path.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.shape.size()));
    for (auto e : s.shape) write_le<std::uint64_t>(os, e);
    detail::write_f64s(os, s.data);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

IUNet load_checkpoint(const std::filesystem::path& path) {
  const Contents c = read_contents(path);
  IUNetConfig cfg;
  try {
    cfg = config_from_json(c.config);
  } catch (const ConfigError& e) {
    throw CorruptFileError(std::string("checkpoint config is invalid: ") + e.what());
  }
  IUNet net = build(cfg, 0);
  fill(net, c);
  return net;
}

void load_checkpoint_into(IUNet& net, const std::filesystem::path& path) {
  const Contents c = read_contents(path);
  if (c.config != to_json(net.cfg)) {
    const auto stored_dim = c.config.value("dim", std::size_t{0});
    throw ConfigError("checkpoint config (dim " + std::to_string(stored_dim) +
                      ") does not match the network config (dim " +
                      std::to_string(net.cfg.dim) + ")");
  }
  fill(net, c);
}

}  // namespace iunet
