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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "iunet/checkpoint.hpp"
#include "iunet/cli.hpp"
#include "iunet/error.hpp"
#include "support/oracles.hpp"

using namespace iunet;
using namespace iunet::cli;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("iunet_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// The CSV text with column `drop` removed (wall times differ between runs).
std::string without_column(const std::string& csv, std::size_t drop) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) {
    std::istringstream fields(line);
    std::string f;
    for (std::size_t k = 0; std::getline(fields, f, ','); ++k) {
      if (k != drop) out += f + ",";
    }
    out += "\n";
  }
  return out;
}

int run_args(const std::vector<std::string>& args, std::string* out_text = nullptr,
             std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::filesystem::path write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

nlohmann::json small_denoise() {
  return nlohmann::json::parse(R"({
    "network": {"scales": 2, "base_channels": 2},
    "data": {"size": 16, "holes": 3, "train_count": 4, "test_count": 2},
    "training": {"epochs": 2, "batch_size": 2, "lr": 0.005},
    "seed": 3})");
}

nlohmann::json small_flow() {
  return nlohmann::json::parse(R"({
    "network": {"scales": 2, "couplings_per_block": 1, "input_spatial": [2, 2]},
    "flow": {"train_count": 40, "val_count": 10, "sample_count": 200},
    "training": {"epochs": 2, "batch_size": 10, "lr": 0.01},
    "seed": 5})");
}

}  // namespace

TEST_CASE("argument errors exit with 2, help with 0") {
  std::string out, err;
  CHECK(run_args({}, &out, &err) == kExitConfig);
  CHECK(run_args({"frobnicate"}) == kExitConfig);
  CHECK(run_args({"verify", "--no-such-flag"}) == kExitConfig);
  CHECK(run_args({"--help"}, &out) == kExitOk);
  CHECK(out.find("train-denoise") != std::string::npos);
}

TEST_CASE("verify passes, filters by group and reports an injected fault") {
  std::string out;
  CHECK(run_args({"verify"}, &out) == kExitOk);
  for (const auto& g : verify_groups()) CHECK(out.find("PASS " + g + "/") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);

  CHECK(run_args({"verify", "--group", "linalg"}, &out) == kExitOk);
  CHECK(out.find("PASS linalg/") != std::string::npos);
  CHECK(out.find("orthogonality/") == std::string::npos);

  CHECK(run_args({"verify", "--inject-fault", "theta-nan"}, &out) == kExitFailure);
  CHECK(out.find("FAIL orthogonality/") != std::string::npos);
  CHECK(out.find("FAIL linalg/") == std::string::npos);

  CHECK(run_args({"verify", "--group", "nonsense"}) == kExitConfig);
}

TEST_CASE("pixel-shuffle demo tiles are the polyphase components") {
  const auto dir = temp_dir("demo_ps");
  std::ostringstream log;
  DemoOptions opts;
  opts.out_dir = dir;
  opts.seed = 4;
  const DemoResult r = cmd_downsample_demo(opts, log);
  const std::size_t h = r.input.spatial()[0], w = r.input.spatial()[1];
  REQUIRE(r.channels.shape() == std::vector<std::size_t>{4, h / 2, w / 2});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < h / 2; ++i)
        for (std::size_t j = 0; j < w / 2; ++j) {
          CHECK(r.channels[((2 * a + b) * (h / 2) + i) * (w / 2) + j] ==
                r.input[(2 * i + a) * w + 2 * j + b]);
        }
  CHECK(std::filesystem::exists(dir / "pixelshuffle_channels.pgm"));
}

TEST_CASE("Haar demo on a constant image leaves one uniform tile") {
  const auto dir = temp_dir("demo_haar");
  Tensor img(1, {8, 8}, 0.6);
  write_pgm(dir / "flat.pgm", img);
  const Tensor stored = read_pgm(dir / "flat.pgm");  // 8-bit quantized
  const double c = stored[0];
  DemoOptions opts;
  opts.image = dir / "flat.pgm";
  opts.mode = DemoMode::kHaar;
  opts.out_dir = dir;
  std::ostringstream log;
  const DemoResult r = cmd_downsample_demo(opts, log);
  for (std::size_t k = 0; k < 4; ++k) {
    for (double v : r.channels.channel(k)) CHECK(v == doctest::Approx(k == 1 ? 2 * c : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("inverse of the pixel shuffle on constant channels is a 2x2 checkerboard") {
  const auto dir = temp_dir("demo_inv");
  DemoOptions opts;
  opts.out_dir = dir;
  opts.inverse_constant = true;
  std::ostringstream log;
  const DemoResult r = cmd_downsample_demo(opts, log);
  const std::size_t w = r.checkerboard.spatial()[1];
  for (std::size_t i = 0; i < r.checkerboard.spatial()[0]; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      CHECK(r.checkerboard[i * w + j] == 0.25 * static_cast<double>(2 * (i % 2) + j % 2 + 1));
    }
  CHECK(std::filesystem::exists(dir / "pixelshuffle_inverse_constant.pgm"));
}

TEST_CASE("learn-l1 lowers the l1 norm monotonically and stays orthogonal") {
  const auto dir = temp_dir("demo_l1");
  DemoOptions opts;
  opts.mode = DemoMode::kLearnL1;
  opts.out_dir = dir;
  opts.steps = 30;
  std::ostringstream log;
  const DemoResult r = cmd_downsample_demo(opts, log);
  REQUIRE(r.l1.size() >= 2);
  for (std::size_t k = 1; k < r.l1.size(); ++k) CHECK(r.l1[k] < r.l1[k - 1]);
  for (double e : r.orthogonality) CHECK(e <= 1e-8);
  const std::string csv = slurp(dir / "learn_l1.csv");
  CHECK(csv.rfind("step,l1,orthogonality_error,config_hash\n", 0) == 0);
}

TEST_CASE("demo rejects odd image extents and bad modes") {
  const auto dir = temp_dir("demo_err");
  write_pgm(dir / "odd.pgm", Tensor(1, {5, 6}, 0.5));
  DemoOptions opts;
  opts.image = dir / "odd.pgm";
  opts.out_dir = dir;
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_downsample_demo(opts, log), ShapeError);
  CHECK(run_args({"downsample-demo", "--image", (dir / "odd.pgm").string(), "--out", dir.string()}) ==
        kExitConfig);
  CHECK(run_args({"downsample-demo", "--mode", "fourier", "--out", dir.string()}) == kExitConfig);
  CHECK_THROWS_AS(parse_demo_mode("fourier"), ConfigError);
}

TEST_CASE("denoise config parsing") {
  const DenoiseRunConfig cfg = denoise_config_from_json(small_denoise());
  CHECK(cfg.net.scales == 2);
  CHECK(cfg.net.data_channels == 1);
  CHECK(cfg.net.input_spatial == std::vector<std::size_t>{16, 16});
  CHECK(cfg.epochs == 2);
  // Round trip through to_json.
  CHECK(to_json(denoise_config_from_json(to_json(cfg))) == to_json(cfg));

  auto bad = small_denoise();
  bad["training"]["epohcs"] = 3;
  CHECK_THROWS_AS(denoise_config_from_json(bad), ConfigError);
  bad = small_denoise();
  bad["colour"] = true;
  CHECK_THROWS_AS(denoise_config_from_json(bad), ConfigError);
  bad = small_denoise();
  bad["network"]["input_spatial"] = {32, 32};
  CHECK_THROWS_AS(denoise_config_from_json(bad), ConfigError);
  bad = small_denoise();
  bad["training"]["lr"] = -1.0;
  CHECK_THROWS_AS(denoise_config_from_json(bad), ConfigError);
  bad = small_denoise();
  bad["data"]["size"] = "big";
  CHECK_THROWS_AS(denoise_config_from_json(bad), ConfigError);
}

TEST_CASE("zero denoise epochs leave the output equal to the input") {
  auto j = small_denoise();
  j["training"]["epochs"] = 0;
  std::ostringstream log;
  const DenoiseResult r = cmd_train_denoise(denoise_config_from_json(j), temp_dir("dn0"), log);
  REQUIRE(r.epochs.size() == 1);
  CHECK(r.epochs[0].test_psnr == doctest::Approx(r.epochs[0].test_psnr_input).epsilon(1e-12));
}

TEST_CASE("denoise runs are deterministic and write their artifacts") {
  const auto a = temp_dir("dn_a"), b = temp_dir("dn_b");
  const auto cfg = write_file(a / "cfg.json", small_denoise().dump());
  CHECK(run_args({"train-denoise", "--config", cfg.string(), "--out", a.string()}) == kExitOk);
  CHECK(run_args({"train-denoise", "--config", cfg.string(), "--out", b.string()}) == kExitOk);
  const std::string csv = slurp(a / "denoise_metrics.csv");
  CHECK(csv == slurp(b / "denoise_metrics.csv"));
  CHECK(csv.rfind("epoch,train_loss,train_psnr,test_psnr,test_psnr_input,config_hash\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(slurp(a / "denoise.ckpt") == slurp(b / "denoise.ckpt"));
  CHECK(std::filesystem::exists(a / "denoise_example.pgm"));

  // --seed overrides the config and changes the run.
  const auto c = temp_dir("dn_c");
  CHECK(run_args({"train-denoise", "--config", cfg.string(), "--seed", "9", "--out", c.string()}) ==
        kExitOk);
  CHECK(slurp(c / "denoise_metrics.csv") != csv);
}

TEST_CASE("bad config files exit with 2") {
  const auto dir = temp_dir("badcfg");
  const auto broken = write_file(dir / "broken.json", "{ not json");
  CHECK(run_args({"train-denoise", "--config", broken.string(), "--out", dir.string()}) == kExitConfig);
  CHECK(run_args({"train-flow", "--config", (dir / "missing.json").string()}) == kExitConfig);
  const auto unknown = write_file(dir / "unknown.json", R"({"depths": [1, 2], "speed": 3})");
  CHECK(run_args({"bench-memory", "--config", unknown.string(), "--out", dir.string()}) == kExitConfig);
  const auto holes = write_file(
      dir / "holes.json", R"({"network": {"scales": 2}, "data": {"size": 16, "holes": 400}})");
  CHECK(run_args({"train-denoise", "--config", holes.string(), "--out", dir.string()}) == kExitConfig);
}

TEST_CASE("flow command trains, samples and is deterministic") {
  const auto a = temp_dir("flow_a"), b = temp_dir("flow_b");
  std::ostringstream log;
  const FlowRunConfig cfg = flow_config_from_json(small_flow());
  const FlowRunResult ra = cmd_train_flow(cfg, a, log);
  const FlowRunResult rb = cmd_train_flow(cfg, b, log);
  CHECK(ra.log.epochs.size() == 3);
  CHECK(ra.sample_mean.size() == 8);
  CHECK(slurp(a / "flow_samples.pgm") == slurp(b / "flow_samples.pgm"));
  CHECK(without_column(slurp(a / "flow_metrics.csv"), 3) ==
        without_column(slurp(b / "flow_metrics.csv"), 3));
  CHECK(load_checkpoint(a / "flow.ckpt").cfg.scales == 2);
}

TEST_CASE("an untrained flow samples a standard-normal cloud") {
  auto j = small_flow();
  j["training"]["epochs"] = 0;
  j["flow"]["sample_count"] = 4000;
  std::ostringstream log;
  const FlowRunResult r = cmd_train_flow(flow_config_from_json(j), temp_dir("flow0"), log);
  // Mean of 16000 standard-normal draws per channel: standard error ~0.008.
  CHECK(std::abs(r.channel_mean[0]) < 0.05);
  CHECK(std::abs(r.channel_mean[1]) < 0.05);
}

TEST_CASE("flow config validation") {
  auto bad = small_flow();
  bad["network"]["base_channels"] = 4;
  CHECK_THROWS_AS(flow_config_from_json(bad), ConfigError);
  bad = small_flow();
  bad["network"]["data_channels"] = 2;
  CHECK_THROWS_AS(flow_config_from_json(bad), ConfigError);
  bad = small_flow();
  bad["flow"]["pre_shuffle"] = {2, 2};
  CHECK_THROWS_AS(flow_config_from_json(bad), ConfigError);  // base 2 is not a multiple of 4
  auto ok = small_flow();
  ok["network"]["base_channels"] = 8;
  ok["network"]["input_spatial"] = {2, 2};
  ok["network"]["scales"] = 1;
  ok["flow"]["pre_shuffle"] = {2, 2};
  const FlowRunConfig cfg = flow_config_from_json(ok);
  REQUIRE(cfg.pre_shuffle.has_value());
  CHECK(to_json(flow_config_from_json(to_json(cfg))) == to_json(cfg));
}

TEST_CASE("bench-memory on a small net shows the expected trends") {
  const auto dir = temp_dir("bench");
  const auto cfg = bench_config_from_json(nlohmann::json::parse(
      R"({"network": {"scales": 2, "base_channels": 2, "input_spatial": [8, 8]}, "depths": [1, 2, 4]})"));
  std::ostringstream log;
  const BenchResult r = cmd_bench_memory(cfg, dir, log);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.ratio_decreasing);
  CHECK(r.me_tensors_constant);
  for (const auto& row : r.rows) CHECK(row.peak_me_bytes < row.peak_conv_bytes);
  const std::string csv = slurp(dir / "bench_memory.csv");
  CHECK(csv.rfind("delta,peak_me_bytes,peak_conv_bytes,ratio,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  CHECK_THROWS_AS(bench_config_from_json(nlohmann::json::parse(R"({"depths": [4, 2]})")), ConfigError);
  CHECK_THROWS_AS(bench_config_from_json(nlohmann::json::parse(R"({"depths": []})")), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const auto a = to_json(default_denoise_config());
  CHECK(config_hash(a) == config_hash(a));
  CHECK(config_hash(a).size() == 16);
  auto b = a;
  b["seed"] = 99;
  CHECK(config_hash(a) != config_hash(b));
}
