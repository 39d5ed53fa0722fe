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


// `iunet bench-memory`: stored activations and wall time of the two
// gradient engines on the same network and input, for several depths.

#include <sys/resource.h>

#include <algorithm>
#include <ostream>

#include "common.hpp"
#include "iunet/cli.hpp"
#include "iunet/csv.hpp"
#include "iunet/rng.hpp"

namespace iunet::cli {

namespace {

constexpr int kRepeats = 3;  // wall times are the minimum over repeats

nlohmann::json default_network() {
  return {{"dim", 2},
          {"scales", 4},
          {"base_channels", 4},
          {"split_fractions", "1/2"},
          {"coupling", "additive"},
          {"input_spatial", {32, 32}}};
}

long max_rss_kb() {
  rusage u{};
  if (getrusage(RUSAGE_SELF, &u) != 0) return -1;
  return u.ru_maxrss;
}

}  // namespace

BenchConfig default_bench_config() {
  BenchConfig cfg;
  cfg.net = config_from_json(default_network());
  return cfg;
}

BenchConfig bench_config_from_json(const nlohmann::json& j) {
  BenchConfig cfg = default_bench_config();
  detail::ObjectReader top(j, "config");
  top.read("depths", cfg.depths);
  top.read("seed", cfg.seed);
  cfg.net = config_from_json(detail::with_fallback(top.child("network"), default_network()));
  top.finish();
  if (cfg.depths.empty()) throw ConfigError("depths must not be empty");
  for (std::size_t i = 0; i < cfg.depths.size(); ++i) {
    if (cfg.depths[i] == 0 || (i > 0 && cfg.depths[i] <= cfg.depths[i - 1])) {
      throw ConfigError("depths must be positive and strictly ascending");
    }
  }
  return cfg;
}

nlohmann::json to_json(const BenchConfig& cfg) {
  return {{"network", to_json(cfg.net)}, {"depths", cfg.depths}, {"seed", cfg.seed}};
}

BenchResult cmd_bench_memory(const BenchConfig& cfg, const std::filesystem::path& out_dir,
                             std::ostream& out) {
  detail::ensure_dir(out_dir);
  const std::string hash = config_hash(to_json(cfg));
  CsvWriter csv(out_dir / "bench_memory.csv",
                {"delta", "peak_me_bytes", "peak_conv_bytes", "ratio", "time_me_s", "time_conv_s",
                 "me_tensors", "conv_tensors", "max_rss_kb", "config_hash"});
  const Rng root(cfg.seed);
  BenchResult res;
  for (std::size_t delta : cfg.depths) {
    IUNetConfig nc = cfg.net;
    nc.couplings_per_block = delta;
    const IUNet net = build(nc, root.fork(delta).next_u64());
    Rng rng = root.fork(1000 + delta);
    Tensor x(nc.input_channels(), nc.input_spatial);
    Tensor g(nc.input_channels(), nc.input_spatial);
    for (double& v : x.data()) v = rng.normal();
    for (double& v : g.data()) v = rng.normal();

    BenchRow row;
    row.delta = delta;
    row.time_me_s = row.time_conv_s = 1e300;
    for (int rep = 0; rep < kRepeats; ++rep) {
      const GradReport me = backward_memeff(net, x, g);
      Tape tape;
      forward(net, x, &tape);
      const GradReport conv = backward_conventional(net, &tape, g);
      row.peak_me_bytes = me.peak_stored_activation_bytes;
      row.peak_conv_bytes = conv.peak_stored_activation_bytes;
      row.me_tensors = me.stored_tensor_count;
      row.conv_tensors = conv.stored_tensor_count;
      row.time_me_s = std::min(row.time_me_s, me.wall_time_s);
      row.time_conv_s = std::min(row.time_conv_s, conv.wall_time_s);
    }
    row.ratio = static_cast<double>(row.peak_me_bytes) / static_cast<double>(row.peak_conv_bytes);
    row.max_rss_kb = max_rss_kb();
    csv.row({CsvWriter::num(row.delta), CsvWriter::num(row.peak_me_bytes),
             CsvWriter::num(row.peak_conv_bytes), CsvWriter::num(row.ratio),
             CsvWriter::num(row.time_me_s), CsvWriter::num(row.time_conv_s),
             CsvWriter::num(row.me_tensors), CsvWriter::num(row.conv_tensors),
             std::to_string(row.max_rss_kb), hash});
    out << "delta " << delta << ": ME " << row.peak_me_bytes << " B, conventional "
        << row.peak_conv_bytes << " B, ratio " << row.ratio << ", time " << row.time_me_s
        << " s vs " << row.time_conv_s << " s\n";
    res.rows.push_back(row);
  }
  res.ratio_decreasing = res.me_tensors_constant = res.me_slower = true;
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const BenchRow& r = res.rows[i];
    if (i > 0) {
      res.ratio_decreasing &= r.ratio < res.rows[i - 1].ratio;
      res.me_tensors_constant &= r.me_tensors == res.rows[i - 1].me_tensors;
    }
    res.me_slower &= r.time_me_s > r.time_conv_s;
  }
  out << (res.ratio_decreasing ? "ratio strictly decreasing in delta\n"
                               : "ratio NOT strictly decreasing in delta\n");
  if (!res.me_tensors_constant) out << "ME stored-tensor count depends on delta\n";
  return res;
}

}  // namespace iunet::cli
