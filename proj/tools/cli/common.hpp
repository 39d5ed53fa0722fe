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

// Helpers shared by the command implementations.

#include <filesystem>
#include <numbers>
#include <set>
#include <string>

#include <json.hpp>

#include "iunet/error.hpp"
#include "iunet/linalg.hpp"

namespace iunet::cli::detail {

/// Reads optional fields of a JSON object and remembers which keys were
/// consumed, so `finish` can reject the rest as unknown.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <class T>
  void read(const std::string& key, T& target) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      target = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  /// The sub-object under `key`, or nullptr.
  const nlohmann::json* child(const std::string& key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("unknown key \"" + item.key() + "\" in " + where_);
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void require_positive(double v, const std::string& what) {
  if (!(v > 0.0)) throw ConfigError(what + " must be positive");
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

/// Network config from `user`, with any key it leaves out taken from
/// `fallback`. Strides and split fractions are filled per scale by
/// config_from_json when absent.
inline nlohmann::json with_fallback(const nlohmann::json* user, const nlohmann::json& fallback) {
  if (user == nullptr) return fallback;
  if (!user->is_object()) throw ConfigError("network must be a JSON object");
  nlohmann::json merged = *user;
  for (const auto& item : fallback.items()) {
    if (!merged.contains(item.key())) merged[item.key()] = item.value();
  }
  return merged;
}

/// theta whose skew part is (pi/2) times the Haar generator, so that
/// exp(skew(theta)) is the 2x2 Haar transform.
inline Matrix haar_theta() {
  return Matrix{{0, 0, -1, -1}, {0, 0, 1, 1}, {0, 0, 0, 0}, {0, 0, 0, 0}} *
         (std::numbers::pi / 4);
}

}  // namespace iunet::cli::detail
