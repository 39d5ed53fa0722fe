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


// `iunet train-flow`: an iUNet trained as a normalizing flow on the
// two-component Gaussian-mixture toy data, followed by sampling.

#include <ostream>

#include "common.hpp"
#include "iunet/checkpoint.hpp"
#include "iunet/cli.hpp"
#include "iunet/csv.hpp"
#include "iunet/rng.hpp"

namespace iunet::cli {

namespace {

nlohmann::json default_network() {
  return {{"dim", 2},
          {"scales", 3},
          {"base_channels", 2},
          {"couplings_per_block", 4},
          {"coupling", "affine"},
          {"input_spatial", {4, 4}}};
}

}  // namespace

FlowRunConfig default_flow_config() {
  FlowRunConfig cfg;
  cfg.net = config_from_json(default_network());
  cfg.train.epochs = 200;
  cfg.train.batch_size = 10;
  cfg.train.adam.lr = 5e-3;
  return cfg;
}

FlowRunConfig flow_config_from_json(const nlohmann::json& j) {
  FlowRunConfig cfg = default_flow_config();
  detail::ObjectReader top(j, "config");
  if (const auto* flow = top.child("flow")) {
    detail::ObjectReader r(*flow, "flow");
    r.read("train_count", cfg.train_count);
    r.read("val_count", cfg.val_count);
    r.read("sample_count", cfg.sample_count);
    if (const auto* ps = r.child("pre_shuffle")) {
      if (ps->is_null()) {
        cfg.pre_shuffle.reset();
      } else {
        try {
          cfg.pre_shuffle = StrideSpec(ps->get<std::vector<std::size_t>>());
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(std::string("flow.pre_shuffle: ") + e.what());
        } catch (const ShapeError& e) {
          throw ConfigError(std::string("flow.pre_shuffle: ") + e.what());
        }
      }
    }
    r.finish();
  }
  if (const auto* training = top.child("training")) {
    detail::ObjectReader r(*training, "training");
    r.read("epochs", cfg.train.epochs);
    r.read("batch_size", cfg.train.batch_size);
    r.read("lr", cfg.train.adam.lr);
    r.finish();
  }
  top.read("seed", cfg.seed);
  cfg.net = config_from_json(detail::with_fallback(top.child("network"), default_network()));
  top.finish();

  if (cfg.net.data_channels != 0) throw ConfigError("a flow network must not set data_channels");
  if (cfg.train_count == 0) throw ConfigError("flow.train_count must be positive");
  if (cfg.train.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  detail::require_positive(cfg.train.adam.lr, "training.lr");
  // The mixture lives in R^2: two data channels.
  const std::size_t data_channels =
      cfg.pre_shuffle ? cfg.net.base_channels / cfg.pre_shuffle->sigma() : cfg.net.base_channels;
  if (data_channels != 2) {
    throw ConfigError("the mixture data has 2 channels; base_channels must be 2 (times the pre-shuffle sigma)");
  }
  return cfg;
}

nlohmann::json to_json(const FlowRunConfig& cfg) {
  nlohmann::json flow = {{"train_count", cfg.train_count},
                         {"val_count", cfg.val_count},
                         {"sample_count", cfg.sample_count},
                         {"pre_shuffle", nullptr}};
  if (cfg.pre_shuffle) {
    std::vector<std::size_t> s;
    for (std::size_t a = 0; a < cfg.pre_shuffle->dim(); ++a) s.push_back((*cfg.pre_shuffle)[a]);
    flow["pre_shuffle"] = s;
  }
  return {{"network", to_json(cfg.net)},
          {"flow", flow},
          {"training",
           {{"epochs", cfg.train.epochs}, {"batch_size", cfg.train.batch_size}, {"lr", cfg.train.adam.lr}}},
          {"seed", cfg.seed}};
}

FlowRunResult cmd_train_flow(const FlowRunConfig& cfg, const std::filesystem::path& out_dir,
                             std::ostream& out) {
  detail::ensure_dir(out_dir);
  const std::string hash = config_hash(to_json(cfg));
  const Rng root(cfg.seed);
  FlowModel model = make_flow(cfg.net, root.fork(3).next_u64(), cfg.pre_shuffle);
  const auto shape = model.data_shape();
  const std::vector<std::size_t> spatial(shape.begin() + 1, shape.end());
  const BatchTensor train = gen_mixture_dataset(cfg.train_count, spatial, root.fork(1).next_u64(), cfg.mixture);
  const BatchTensor val = gen_mixture_dataset(cfg.val_count, spatial, root.fork(2).next_u64(), cfg.mixture);

  FlowTrainConfig tc = cfg.train;
  tc.seed = root.fork(4).next_u64();
  tc.checkpoint = out_dir / "flow.ckpt";
  save_checkpoint(model.net, *tc.checkpoint);

  FlowRunResult res;
  res.log = train_flow(model, train, val, tc, [&](const FlowEpoch& e) {
    if (e.epoch % 10 == 0 || e.epoch == tc.epochs) {
      out << "epoch " << e.epoch << ": train " << e.train_bits << " bits/dim, val " << e.val_bits
          << " bits/dim\n";
    }
  });
  write_flow_csv(out_dir / "flow_metrics.csv", res.log, hash);

  const BatchTensor samples = sample(model, cfg.sample_count, root.fork(5).next_u64());
  if (!samples.samples.empty()) {
    res.sample_mean.assign(samples.samples.front().numel(), 0.0);
    for (const Tensor& s : samples.samples) {
      for (std::size_t i = 0; i < s.numel(); ++i) res.sample_mean[i] += s[i];
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& v : res.sample_mean) v *= inv;
    const std::size_t per_channel = res.sample_mean.size() / 2;
    for (std::size_t c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < per_channel; ++i) acc += res.sample_mean[c * per_channel + i];
      res.channel_mean[c] = acc / static_cast<double>(per_channel);
    }
    // One row per channel, one tile per sample, on a [-4, 6] gray scale.
    const std::size_t shown = std::min<std::size_t>(samples.size(), 16);
    const std::size_t w = spatial.back();
    const std::size_t h = per_channel / w;
    Tensor grid(2 * shown, {h, w});
    for (std::size_t k = 0; k < shown; ++k) {
      for (std::size_t c = 0; c < 2; ++c) {
        const auto src = samples.samples[k].channel(c);
        std::copy(src.begin(), src.end(), grid.channel(c * shown + k).begin());
      }
    }
    write_pgm(out_dir / "flow_samples.pgm", tile_channels(grid, shown, 1, -4.0), -4.0, 6.0);
    out << "sample mean per channel: " << res.channel_mean[0] << ", " << res.channel_mean[1]
        << " (mixture mean " << cfg.mixture.mean()[0] << ", " << cfg.mixture.mean()[1] << ")\n";
  }
  return res;
}

}  // namespace iunet::cli
