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


#include "iunet/optim.hpp"

#include <cmath>

#include "iunet/error.hpp"

namespace iunet {

void Adam::step(const std::vector<ParamSlot>& params, const std::vector<NamedArray>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.data.size(), 0.0);
      v_.emplace_back(p.data.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data;
    const auto& g = grads[k].values;
    if (g.size() != p.size() || m_[k].size() != p.size()) {
      throw ShapeError("gradient for " + params[k].path + " has the wrong size");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + cfg_.eps);
    }
  }
}

}  // namespace iunet
