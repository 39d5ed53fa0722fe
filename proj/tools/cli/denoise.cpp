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


// `iunet train-denoise`: an iUNet with identity initialization trained with
// the squared l2 loss to recover foam phantoms from blurred, noisy copies.

#include <cmath>
#include <numeric>
#include <ostream>
#include <utility>

#include "common.hpp"
#include "iunet/checkpoint.hpp"
#include "iunet/cli.hpp"
#include "iunet/csv.hpp"
#include "iunet/rng.hpp"

namespace iunet::cli {

namespace {

nlohmann::json default_network(std::size_t size) {
  return {{"dim", 2},
          {"scales", 3},
          {"base_channels", 4},
          {"data_channels", 1},
          {"couplings_per_block", 2},
          {"coupling", "additive"},
          {"input_spatial", {size, size}}};
}

double mse(const Tensor& a, const Tensor& b) {
  const double d = norm(a - b);
  return d * d / static_cast<double>(a.numel());
}

struct Scores {
  double loss = 0.0;
  double psnr_out = 0.0;
  double psnr_in = 0.0;
};

Scores score(const IUNet& net, const std::vector<NoisySample>& set) {
  Scores s;
  for (const NoisySample& sample : set) {
    const Tensor y = forward(net, sample.degraded).y;
    s.loss += mse(y, sample.clean);
    s.psnr_out += psnr(y, sample.clean).db;
    s.psnr_in += psnr(sample.degraded, sample.clean).db;
  }
  const double n = static_cast<double>(std::max<std::size_t>(set.size(), 1));
  s.loss /= n;
  s.psnr_out /= n;
  s.psnr_in /= n;
  return s;
}

void restore(IUNet& net, const std::vector<NamedArray>& saved) {
  auto slots = params(net);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    std::copy(saved[k].values.begin(), saved[k].values.end(), slots[k].data.begin());
  }
}

}  // namespace

DenoiseRunConfig default_denoise_config() {
  DenoiseRunConfig cfg;
  cfg.net = config_from_json(default_network(cfg.data.size));
  return cfg;
}

DenoiseRunConfig denoise_config_from_json(const nlohmann::json& j) {
  DenoiseRunConfig cfg = default_denoise_config();
  detail::ObjectReader top(j, "config");
  if (const auto* data = top.child("data")) {
    detail::ObjectReader r(*data, "data");
    r.read("size", cfg.data.size);
    r.read("holes", cfg.data.holes);
    r.read("noise_sigma", cfg.data.noise_sigma);
    r.read("blur_sigma", cfg.data.blur_sigma);
    r.read("train_count", cfg.train_count);
    r.read("test_count", cfg.test_count);
    r.finish();
  }
  if (const auto* training = top.child("training")) {
    detail::ObjectReader r(*training, "training");
    r.read("epochs", cfg.epochs);
    r.read("batch_size", cfg.batch_size);
    r.read("lr", cfg.adam.lr);
    r.finish();
  }
  top.read("seed", cfg.seed);
  cfg.net = config_from_json(detail::with_fallback(top.child("network"),
                                                   default_network(cfg.data.size)));
  top.finish();

  if (cfg.net.data_channels != 1) throw ConfigError("network.data_channels must be 1 for grayscale images");
  if (cfg.net.dim != 2 || cfg.net.input_spatial != std::vector<std::size_t>{cfg.data.size, cfg.data.size}) {
    throw ConfigError("network.input_spatial must be [size, size] to match data.size");
  }
  if (cfg.train_count == 0 || cfg.test_count == 0) throw ConfigError("train_count and test_count must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.data.noise_sigma < 0.0 || cfg.data.blur_sigma < 0.0) throw ConfigError("noise_sigma and blur_sigma must be non-negative");
  detail::require_positive(cfg.adam.lr, "training.lr");
  return cfg;
}

nlohmann::json to_json(const DenoiseRunConfig& cfg) {
  return {{"network", to_json(cfg.net)},
          {"data",
           {{"size", cfg.data.size},
            {"holes", cfg.data.holes},
            {"noise_sigma", cfg.data.noise_sigma},
            {"blur_sigma", cfg.data.blur_sigma},
            {"train_count", cfg.train_count},
            {"test_count", cfg.test_count}}},
          {"training", {{"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}, {"lr", cfg.adam.lr}}},
          {"seed", cfg.seed}};
}

DenoiseResult cmd_train_denoise(const DenoiseRunConfig& cfg, const std::filesystem::path& out_dir,
                                std::ostream& out) {
  detail::ensure_dir(out_dir);
  const std::string hash = config_hash(to_json(cfg));
  const Rng root(cfg.seed);
  const auto train = gen_denoise_dataset(cfg.train_count, cfg.data, root.fork(1).next_u64());
  const auto test = gen_denoise_dataset(cfg.test_count, cfg.data, root.fork(2).next_u64());
  IUNet net = build(cfg.net, root.fork(3).next_u64());
  const auto ckpt = out_dir / "denoise.ckpt";

  CsvWriter csv(out_dir / "denoise_metrics.csv",
                {"epoch", "train_loss", "train_psnr", "test_psnr", "test_psnr_input", "config_hash"});
  DenoiseResult res;
  auto evaluate = [&](std::size_t epoch) {
    const Scores tr = score(net, train);
    const Scores te = score(net, test);
    DenoiseEpoch row{epoch, tr.loss, tr.psnr_out, te.psnr_out, te.psnr_in};
    if (!std::isfinite(row.train_loss) || !std::isfinite(row.test_psnr)) return false;
    res.epochs.push_back(row);
    csv.row({CsvWriter::num(epoch), CsvWriter::num(row.train_loss), CsvWriter::num(row.train_psnr),
             CsvWriter::num(row.test_psnr), CsvWriter::num(row.test_psnr_input), hash});
    if (epoch % 10 == 0 || epoch == cfg.epochs) {
      out << "epoch " << epoch << ": train loss " << row.train_loss << ", test PSNR "
          << row.test_psnr << " dB (input " << row.test_psnr_input << " dB)\n";
    }
    return true;
  };
  if (!evaluate(0)) throw NumericError("non-finite loss before training");

  Adam adam(cfg.adam);
  std::vector<NamedArray> last_good = to_named_arrays(params(std::as_const(net)));
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.fork(100 + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    std::string failure;
    try {
      for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
        const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
        std::vector<NamedArray> total;
        for (std::size_t b = b0; b < b1; ++b) {
          const NoisySample& s = train[order[b]];
          // d/dy of mean((y - clean)^2), averaged over the batch.
          const double scale = 2.0 / (static_cast<double>(s.clean.numel()) * static_cast<double>(b1 - b0));
          const Tensor y = forward(net, s.degraded).y;
          GradReport rep = backward_memeff(net, s.degraded, (y - s.clean) * scale);
          if (total.empty()) {
            total = std::move(rep.grads);
          } else {
            for (std::size_t k = 0; k < total.size(); ++k) {
              for (std::size_t i = 0; i < total[k].values.size(); ++i) total[k].values[i] += rep.grads[k].values[i];
            }
          }
        }
        adam.step(params(net), total);
      }
      if (!evaluate(epoch)) failure = "non-finite loss";
    } catch (const NumericError& e) {
      failure = e.what();
    }
    if (!failure.empty()) {
      restore(net, last_good);
      save_checkpoint(net, ckpt);
      throw NumericError("denoise training diverged in epoch " + std::to_string(epoch) + " (" +
                         failure + "); checkpoint of epoch " + std::to_string(epoch - 1) +
                         " written to " + ckpt.string());
    }
    last_good = to_named_arrays(params(std::as_const(net)));
  }
  save_checkpoint(net, ckpt);

  // Clean, degraded and restored versions of the first test image.
  const NoisySample& s = test.front();
  Tensor panel = concat_channels(concat_channels(s.clean, s.degraded), forward(net, s.degraded).y);
  write_pgm(out_dir / "denoise_example.pgm", tile_channels(panel, 3, 2, 1.0));
  out << "wrote " << (out_dir / "denoise_metrics.csv").string() << ", " << ckpt.string()
      << " and " << (out_dir / "denoise_example.pgm").string() << "\n";
  return res;
}

}  // namespace iunet::cli
