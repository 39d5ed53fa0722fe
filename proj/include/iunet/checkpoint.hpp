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
#include <filesystem>

#include "iunet/iunet.hpp"

namespace iunet {

// File layout, all integers little-endian:
//   "IUNT"  u32 version  u64 n  <n bytes of JSON config>
//   u64 record_count, then per record:
//   u32 n  <n bytes path>  u32 rank  u64 extent[rank]  f64 values[prod(extent)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const IUNet& net, const std::filesystem::path& path);

/// Rebuilds the network from the stored config and fills its parameters.
/// Throws CorruptFileError on bad magic, truncation, unknown or missing
/// records, and on a version mismatch.
IUNet load_checkpoint(const std::filesystem::path& path);

/// Loads into an existing network. Throws ConfigError if the stored config
/// differs from net.cfg.
void load_checkpoint_into(IUNet& net, const std::filesystem::path& path);

}  // namespace iunet
