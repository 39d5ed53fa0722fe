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


// Argument parsing and error-to-exit-code mapping for the `iunet` binary.

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "common.hpp"
#include "iunet/cli.hpp"
#include "iunet/csv.hpp"
#include "iunet/error.hpp"

namespace iunet::cli {

std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

namespace {

template <class Cfg, class Parse>
Cfg load(const std::string& path, Parse parse, Cfg fallback) {
  return path.empty() ? fallback : parse(read_json_file(path));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invertible U-Nets with learnable orthogonal resampling"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::uint64_t seed_value = 0;
  std::vector<CLI::Option*> seed_opts;

  auto* verify = app.add_subcommand("verify", "Run the built-in numerical self-checks");
  VerifyOptions vopts;
  std::string fault;
  verify->add_option("--group", vopts.group, "Run a single check group");
  seed_opts.push_back(verify->add_option("--seed", seed_value, "Seed for the random test cases"));
  verify->add_option("--inject-fault", fault, "Test hook: theta-nan")
      ->check(CLI::IsMember({"theta-nan"}));

  auto* demo = app.add_subcommand("downsample-demo", "Tile the channels of a 2x2 downsampling");
  DemoOptions dopts;
  std::string image, mode = "pixelshuffle";
  demo->add_option("--image", image, "8-bit PGM input (built-in image if omitted)");
  demo->add_option("--mode", mode, "pixelshuffle, haar, random or learn-l1");
  demo->add_option("--config", config_path, "JSON with steps and lr for learn-l1");
  demo->add_option("--out", out_dir, "Output directory");
  seed_opts.push_back(demo->add_option("--seed", seed_value, "Seed for random and learn-l1"));
  demo->add_flag("--inverse-constant", dopts.inverse_constant,
                 "Also upsample four constant channels");

  auto* denoise = app.add_subcommand("train-denoise", "Train a denoising iUNet on foam phantoms");
  auto* flow = app.add_subcommand("train-flow", "Train an iUNet normalizing flow on toy data");
  auto* bench = app.add_subcommand("bench-memory", "Compare the memory use of both gradient engines");
  for (auto* sub : {denoise, flow, bench}) {
    sub->add_option("--config", config_path, "JSON experiment config (defaults if omitted)");
    seed_opts.push_back(sub->add_option("--seed", seed_value, "Overrides the config seed"));
    sub->add_option("--out", out_dir, "Output directory");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::optional<std::uint64_t> seed;
  for (const auto* o : seed_opts) {
    if (o->count() > 0) seed = seed_value;
  }
  try {
    if (verify->parsed()) {
      vopts.inject_nonfinite_theta = fault == "theta-nan";
      if (seed) vopts.seed = *seed;
      const auto results = cmd_verify(vopts, out);
      const auto failed = std::count_if(results.begin(), results.end(),
                                        [](const CheckResult& r) { return !r.passed; });
      out << results.size() - failed << "/" << results.size() << " checks passed\n";
      return failed == 0 ? kExitOk : kExitFailure;
    }
    if (demo->parsed()) {
      if (!image.empty()) dopts.image = image;
      dopts.mode = parse_demo_mode(mode);
      dopts.out_dir = out_dir;
      if (seed) dopts.seed = *seed;
      if (!config_path.empty()) {
        const nlohmann::json j = read_json_file(config_path);
        detail::ObjectReader r(j, "config");
        r.read("steps", dopts.steps);
        r.read("lr", dopts.lr);
        r.finish();
      }
      cmd_downsample_demo(dopts, out);
      return kExitOk;
    }
    if (denoise->parsed()) {
      DenoiseRunConfig cfg = load(config_path, denoise_config_from_json, default_denoise_config());
      if (seed) cfg.seed = *seed;
      cmd_train_denoise(cfg, out_dir, out);
      return kExitOk;
    }
    if (flow->parsed()) {
      FlowRunConfig cfg = load(config_path, flow_config_from_json, default_flow_config());
      if (seed) cfg.seed = *seed;
      cmd_train_flow(cfg, out_dir, out);
      return kExitOk;
    }
    if (bench->parsed()) {
      BenchConfig cfg = load(config_path, bench_config_from_json, default_bench_config());
      if (seed) cfg.seed = *seed;
      return cmd_bench_memory(cfg, out_dir, out).ok() ? kExitOk : kExitFailure;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CorruptFileError& e) {
    err << "bad input file: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GenerationError& e) {
    err << "data generation failed: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace iunet::cli
