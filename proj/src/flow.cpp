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


#include "iunet/flow.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "iunet/checkpoint.hpp"
#include "iunet/csv.hpp"
#include "iunet/error.hpp"
#include "iunet/linalg.hpp"
#include "iunet/resample.hpp"
#include "iunet/rng.hpp"

namespace iunet {

namespace {

ResampleOp shuffle_op(const FlowModel& m) {
  return make_pixel_shuffle(*m.pre_shuffle, m.data_shape()[0]);
}

}  // namespace

std::vector<std::size_t> FlowModel::data_shape() const {
  std::vector<std::size_t> s = net.cfg.input_shape();
  if (pre_shuffle) {
    s[0] /= pre_shuffle->sigma();
    for (std::size_t a = 1; a < s.size(); ++a) s[a] *= (*pre_shuffle)[a - 1];
  }
  return s;
}

std::size_t FlowModel::dimension() const {
  const auto s = net.cfg.input_shape();
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

FlowModel make_flow(const IUNetConfig& cfg, std::uint64_t seed,
                    std::optional<StrideSpec> pre_shuffle) {
  if (cfg.data_channels != 0) {
    throw ConfigError("a flow needs a fully invertible net (data_channels must be 0)");
  }
  if (pre_shuffle) {
    if (pre_shuffle->dim() != cfg.dim) {
      throw ConfigError("pre-shuffle stride " + pre_shuffle->to_string() +
                        " does not match dim " + std::to_string(cfg.dim));
    }
    if (cfg.base_channels % pre_shuffle->sigma() != 0) {
      throw ConfigError("base_channels must be a multiple of the pre-shuffle sigma");
    }
  }
  return FlowModel{build(cfg, seed), pre_shuffle};
}

FlowForward flow_forward(const FlowModel& model, const Tensor& x) {
  const ForwardResult r =
      forward(model.net, model.pre_shuffle ? down_forward(shuffle_op(model), x) : x);
  return {r.y, r.logdet};
}

Tensor flow_inverse(const FlowModel& model, const Tensor& z, double* logdet) {
  Tensor x = inverse(model.net, z, logdet);
  return model.pre_shuffle ? up_forward(shuffle_op(model), x) : x;
}

double log_standard_normal(const Tensor& z) {
  const double n = static_cast<double>(z.numel());
  return -0.5 * dot(z, z) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

LogLikelihood log_likelihood(const FlowModel& model, const Tensor& x) {
  const FlowForward f = flow_forward(model, x);
  if (!f.z.all_finite() || !std::isfinite(f.logdet)) {
    throw NumericError("flow forward pass produced non-finite values");
  }
  return {log_standard_normal(f.z) + f.logdet, f.logdet};
}

double nll_bits_per_dim(double ll, std::size_t n) {
  return -ll / (static_cast<double>(n) * std::numbers::ln2);
}

double mean_nll_bits(const FlowModel& model, const BatchTensor& data) {
  double sum = 0.0;
  for (const Tensor& x : data.samples) {
    sum += nll_bits_per_dim(log_likelihood(model, x).ll, x.numel());
  }
  return sum / static_cast<double>(data.size());
}

BatchTensor sample(const FlowModel& model, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  const auto shape = model.net.cfg.input_shape();
  const std::vector<std::size_t> spatial(shape.begin() + 1, shape.end());
  BatchTensor out;
  out.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Tensor z(shape[0], spatial);
    for (double& v : z.data()) v = rng.normal();
    Tensor x = flow_inverse(model, z);
    const double err = relative_error(flow_forward(model, x).z, z);
    if (!(err <= kReconstructionTol)) {
      throw NumericError("sample " + std::to_string(k) +
                         " failed the inversion check: relative error " + std::to_string(err));
    }
    out.samples.push_back(std::move(x));
  }
  return out;
}

double jacobian_logdet(const FlowModel& model, const Tensor& x, double h) {
  const std::size_t n = x.numel();
  Matrix j(n, n);
  Tensor xp = x;
  for (std::size_t c = 0; c < n; ++c) {
    const double saved = xp[c];
    xp[c] = saved + h;
    const Tensor zp = flow_forward(model, xp).z;
    xp[c] = saved - h;
    const Tensor zm = flow_forward(model, xp).z;
    xp[c] = saved;
    for (std::size_t r = 0; r < n; ++r) j(r, c) = (zp[r] - zm[r]) / (2.0 * h);
  }
  return slogdet(j).log_abs;
}

FlowTrainLog train_flow(FlowModel& model, const BatchTensor& train, const BatchTensor& val,
                        const FlowTrainConfig& cfg,
                        const std::function<void(const FlowEpoch&)>& on_epoch) {
  if (train.size() == 0) throw ConfigError("training set is empty");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto data_shape = model.data_shape();
  for (const Tensor& x : train.samples) {
    if (x.shape() != data_shape) throw ShapeError("training sample has shape " + x.shape_string());
  }
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const Rng root(cfg.seed);
  const double n = static_cast<double>(model.dimension());
  Adam adam(cfg.adam);
  FlowTrainLog log;

  auto evaluate = [&](std::size_t epoch) {
    FlowEpoch row;
    row.epoch = epoch;
    row.train_bits = mean_nll_bits(model, train);
    row.val_bits = val.size() > 0 ? mean_nll_bits(model, val) : row.train_bits;
    row.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    return row;
  };

  log.epochs.push_back(evaluate(0));
  if (on_epoch) on_epoch(log.epochs.back());
  std::vector<NamedArray> last_good = to_named_arrays(params(std::as_const(model.net)));

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.fork(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    try {
      for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
        const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
        const double scale = 1.0 / (static_cast<double>(b1 - b0) * n);
        std::vector<NamedArray> total;
        for (std::size_t b = b0; b < b1; ++b) {
          const Tensor& x = train.samples[order[b]];
          const Tensor xin = model.pre_shuffle ? down_forward(shuffle_op(model), x) : x;
          // Per-sample loss (nats/dim): (|z|^2 / 2 - logdet) / n + const.
          const Tensor z = forward(model.net, xin).y;
          GradReport rep = backward_memeff(model.net, xin, z * scale, -scale);
          if (total.empty()) {
            total = std::move(rep.grads);
          } else {
            for (std::size_t k = 0; k < total.size(); ++k) {
              for (std::size_t i = 0; i < total[k].values.size(); ++i) {
                total[k].values[i] += rep.grads[k].values[i];
              }
            }
          }
        }
        adam.step(params(model.net), total);
      }
      FlowEpoch row = evaluate(epoch);
      if (!std::isfinite(row.train_bits)) throw NumericError("non-finite training NLL");
      log.epochs.push_back(row);
    } catch (const NumericError& e) {
      auto slots = params(model.net);
      for (std::size_t k = 0; k < slots.size(); ++k) {
        std::copy(last_good[k].values.begin(), last_good[k].values.end(), slots[k].data.begin());
      }
      throw NumericError("flow training diverged in epoch " + std::to_string(epoch) + " (" +
                         e.what() + "); parameters restored to epoch " +
                         std::to_string(epoch - 1));
    }
    last_good = to_named_arrays(params(std::as_const(model.net)));
    if (cfg.checkpoint) save_checkpoint(model.net, *cfg.checkpoint);
    if (on_epoch) on_epoch(log.epochs.back());
  }
  return log;
}

void write_flow_csv(const std::filesystem::path& path, const FlowTrainLog& log,
                    const std::string& config_hash) {
  CsvWriter csv(path, {"epoch", "mean_train_nll_bits", "mean_val_nll_bits", "wall_time_s",
                       "config_hash"});
  for (const auto& e : log.epochs) {
    csv.row({CsvWriter::num(e.epoch), CsvWriter::num(e.train_bits), CsvWriter::num(e.val_bits),
             CsvWriter::num(e.wall_time_s), config_hash});
  }
}

}  // namespace iunet
