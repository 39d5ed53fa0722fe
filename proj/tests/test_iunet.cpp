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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "iunet/checkpoint.hpp"
#include "iunet/error.hpp"
#include "iunet/iunet.hpp"
#include "support/nets.hpp"

using namespace iunet;
using iunet::testing::fd_net_gradient;
using iunet::testing::perturb;
using iunet::testing::random_config;
using iunet::testing::random_input;
using iunet::testing::random_tensor;
using iunet::testing::rel_err;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("iunet_test_" + name);
}

IUNetConfig cfg2d(std::size_t scales, std::size_t couplings, CouplingKind kind) {
  IUNetConfig cfg = IUNetConfig::uniform(2, scales, 4, 2, Fraction{1, 2}, couplings,
                                         {1u << scales, 1u << scales});
  cfg.coupling = kind;
  return cfg;
}

}  // namespace

TEST_CASE("channel ladder follows C_{i+1} = sigma * lambda * C_i") {
  CHECK(IUNetConfig::uniform(2, 3, 4, 2, {1, 2}, 1, {8, 8}).channel_ladder() ==
        std::vector<std::size_t>{4, 8, 16});
  CHECK(IUNetConfig::uniform(3, 2, 8, 2, {1, 4}, 1, {4, 4, 4}).channel_ladder() ==
        std::vector<std::size_t>{8, 16});
  IUNetConfig dbs = IUNetConfig::uniform(2, 3, 4, 2, {1, 2}, 1, {8, 8});
  dbs.downsample_before_split = true;
  CHECK(dbs.channel_ladder() == std::vector<std::size_t>{4, 8, 16});

  // Every cut conserves the number of scalars: the kept channels move down
  // a scale, the rest wait as a skip tensor.
  const IUNetConfig cfg = IUNetConfig::uniform(2, 4, 4, 2, {1, 2}, 1, {16, 16});
  const auto c = cfg.channel_ladder();
  const auto n = cfg.spatial_ladder();
  for (std::size_t i = 0; i + 1 < cfg.scales; ++i) {
    const std::size_t here = c[i] * n[i][0] * n[i][1];
    const std::size_t keep = c[i] / 2;
    CHECK(here == (c[i] - keep) * n[i][0] * n[i][1] + c[i + 1] * n[i + 1][0] * n[i + 1][1]);
  }
}

TEST_CASE("config validation names the offending scale") {
  IUNetConfig bad = IUNetConfig::uniform(2, 2, 4, 2, {1, 3}, 1, {4, 4});
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("scale 1"), ConfigError);
  CHECK_THROWS_AS(build(bad, 0), ConfigError);

  IUNetConfig indivisible = IUNetConfig::uniform(2, 3, 4, 2, {1, 2}, 1, {6, 6});
  CHECK_THROWS_WITH_AS(indivisible.validate(), doctest::Contains("scale 2"), ConfigError);

  // 1D, C = 2, lambda = 1/2: scale 2 has sigma * 1 = 2 channels, fine; with
  // stride 3 it would have 3, which the couplings cannot halve.
  IUNetConfig odd = IUNetConfig::uniform(1, 2, 2, 3, {1, 2}, 1, {6});
  CHECK_THROWS_WITH_AS(odd.validate(), doctest::Contains("scale 2"), ConfigError);

  IUNetConfig group = cfg2d(2, 1, CouplingKind::kAdditive);
  group.norm = NormScheme::kGroup;
  group.group_size = 3;
  CHECK_THROWS_AS(group.validate(), ConfigError);
  group.group_size = 2;
  CHECK_NOTHROW(group.validate());

  IUNetConfig wrong_dim = cfg2d(2, 1, CouplingKind::kAdditive);
  wrong_dim.input_spatial = {4, 4, 4};
  CHECK_THROWS_AS(wrong_dim.validate(), ConfigError);
}

TEST_CASE("identity initialization") {
  Rng rng(60);
  for (auto kind : {CouplingKind::kAdditive, CouplingKind::kAffine}) {
    for (std::size_t m = 1; m <= 4; ++m) {
      const IUNet net = build(cfg2d(m, 2, kind), 7);
      const Tensor x = random_input(net.cfg, rng);
      const ForwardResult out = forward(net, x);
      CHECK(out.y.same_shape(x));
      CHECK(max_abs_diff(out.y, x) <= 1e-15 * std::max(1.0, max_abs(x)));
      CHECK(out.logdet == 0.0);
      CHECK(max_abs_diff(inverse(net, x), x) <= 1e-15 * std::max(1.0, max_abs(x)));
    }
  }
}

TEST_CASE("build is deterministic in the seed") {
  const IUNetConfig cfg = cfg2d(3, 2, CouplingKind::kAffine);
  const IUNet a = build(cfg, 5), b = build(cfg, 5), c = build(cfg, 6);
  CHECK(iunet::flatten(to_named_arrays(params(a))) == iunet::flatten(to_named_arrays(params(b))));
  CHECK(iunet::flatten(to_named_arrays(params(a))) != iunet::flatten(to_named_arrays(params(c))));
}

TEST_CASE("additive nets have zero logdet for any parameters") {
  Rng rng(61);
  IUNet net = build(cfg2d(3, 2, CouplingKind::kAdditive), 1);
  perturb(net, rng);
  const ForwardResult out = forward(net, random_input(net.cfg, rng));
  CHECK(out.logdet == 0.0);
}

TEST_CASE("inverse undoes forward") {
  Rng rng(62);
  SUBCASE("2D, m = 2..4, both coupling kinds") {
    for (auto kind : {CouplingKind::kAdditive, CouplingKind::kAffine}) {
      for (std::size_t m = 2; m <= 4; ++m) {
        IUNet net = build(cfg2d(m, 2, kind), m);
        perturb(net, rng);
        const Tensor x = random_input(net.cfg, rng);
        const Tensor y = forward(net, x).y;
        CHECK(relative_error(inverse(net, y), x) <= 1e-8);
      }
    }
  }
  SUBCASE("3D, m = 2, affine") {
    IUNetConfig cfg = IUNetConfig::uniform(3, 2, 8, 2, {1, 4}, 2, {4, 4, 4});
    cfg.coupling = CouplingKind::kAffine;
    IUNet net = build(cfg, 3);
    perturb(net, rng);
    const Tensor x = random_input(cfg, rng);
    CHECK(relative_error(inverse(net, forward(net, x).y), x) <= 1e-8);
  }
  SUBCASE("downsample before split") {
    IUNetConfig cfg = cfg2d(3, 2, CouplingKind::kAffine);
    cfg.downsample_before_split = true;
    IUNet net = build(cfg, 4);
    perturb(net, rng);
    const Tensor x = random_input(cfg, rng);
    CHECK(relative_error(inverse(net, forward(net, x).y), x) <= 1e-8);
  }
  SUBCASE("shape errors") {
    const IUNet net = build(cfg2d(2, 1, CouplingKind::kAdditive), 0);
    CHECK_THROWS_AS(forward(net, Tensor(4, {8, 4})), ShapeError);
    CHECK_THROWS_AS(inverse(net, Tensor(2, {4, 4})), ShapeError);
  }
}

TEST_CASE("conventional backward matches finite differences") {
  Rng rng(63);
  for (auto kind : {CouplingKind::kAdditive, CouplingKind::kAffine}) {
    // Additive: 2D, C = 2, m = 2, one coupling per block, 134 parameters.
    // Affine: 1D, C = 4, m = 2, 136 parameters.
    IUNetConfig cfg = kind == CouplingKind::kAdditive
                          ? IUNetConfig::uniform(2, 2, 2, 2, {1, 2}, 1, {4, 4})
                          : IUNetConfig::uniform(1, 2, 4, 2, {1, 2}, 1, {8});
    cfg.coupling = kind;
    IUNet net = build(cfg, 9);
    perturb(net, rng);
    REQUIRE(param_count(net) <= 200);
    const Tensor x = random_input(cfg, rng);
    const Tensor r = random_tensor(x.channels(), x.spatial(), rng);
    const double w = kind == CouplingKind::kAffine ? -0.7 : 0.0;
    Tape tape;
    forward(net, x, &tape);
    const GradReport rep = backward_conventional(net, &tape, r, w);
    const auto fd = fd_net_gradient(net, x, r, w);
    CHECK(rel_err(iunet::flatten(rep.grads), fd) <= 1e-5);

    // Input gradient too.
    const auto gx = iunet::testing::fd_gradient(
        const_cast<Tensor&>(x).data(),
        [&] { return iunet::testing::probe_loss(net, x, r, w); });
    CHECK(rel_err(rep.grad_input.data(), gx) <= 1e-5);
  }
}

TEST_CASE("conventional backward on a 1D net with expansion convolutions") {
  Rng rng(64);
  IUNetConfig cfg = IUNetConfig::uniform(1, 2, 2, 2, {1, 2}, 1, {8});
  cfg.coupling = CouplingKind::kAffine;
  cfg.data_channels = 1;
  IUNet net = build(cfg, 2);
  const Tensor x0 = random_input(cfg, rng);
  CHECK(max_abs_diff(forward(net, x0).y, x0) <= 1e-15);  // identity at init
  perturb(net, rng);
  const Tensor x = random_input(cfg, rng);
  const Tensor r = random_tensor(1, {8}, rng);
  Tape tape;
  forward(net, x, &tape);
  const GradReport rep = backward_conventional(net, &tape, r, 0.4);
  CHECK(rel_err(iunet::flatten(rep.grads), fd_net_gradient(net, x, r, 0.4)) <= 1e-5);
  CHECK_THROWS_AS(inverse(net, x), UsageError);
}

TEST_CASE("memory-efficient and conventional engines agree") {
  Rng rng(65);
  for (int trial = 0; trial < 12; ++trial) {
    const IUNetConfig cfg = random_config(rng);
    IUNet net = build(cfg, trial);
    perturb(net, rng);
    const Tensor x = random_input(cfg, rng);
    const Tensor r = random_tensor(x.channels(), x.spatial(), rng);
    const double w = rng.normal();
    Tape tape;
    forward(net, x, &tape);
    const GradReport conv = backward_conventional(net, &tape, r, w);
    const GradReport me = backward_memeff(net, x, r, w);
    INFO("config " << to_json(cfg).dump());
    CHECK(rel_err(iunet::flatten(me.grads), iunet::flatten(conv.grads)) <= 1e-9);
    CHECK(relative_error(me.grad_input, conv.grad_input) <= 1e-9);
    CHECK(me.output == conv.output);
    CHECK(me.logdet == conv.logdet);
    CHECK(conv.peak_stored_activation_bytes >= me.peak_stored_activation_bytes);
  }
  SUBCASE("m = 3, delta = 4") {
    IUNet net = build(cfg2d(3, 4, CouplingKind::kAffine), 8);
    perturb(net, rng);
    const Tensor x = random_input(net.cfg, rng);
    const Tensor r = random_tensor(x.channels(), x.spatial(), rng);
    Tape tape;
    forward(net, x, &tape);
    const GradReport conv = backward_conventional(net, &tape, r, 1.0);
    const GradReport me = backward_memeff(net, x, r, 1.0);
    CHECK(rel_err(iunet::flatten(me.grads), iunet::flatten(conv.grads)) <= 1e-9);
  }
}

TEST_CASE("gradient edge cases") {
  Rng rng(66);
  SUBCASE("identity net with loss ||y - x||^2 / 2 has zero coupling gradients") {
    const IUNet net = build(cfg2d(3, 2, CouplingKind::kAffine), 1);
    const Tensor x = random_input(net.cfg, rng);
    const Tensor y = forward(net, x).y;
    // y - x is rounding noise from the orthogonal round trips, not zero.
    CHECK(max_abs_diff(y, x) <= 1e-14);
    const GradReport rep = backward_memeff(net, x, y - x);
    for (const auto& g : rep.grads) {
      for (double v : g.values) CHECK(std::abs(v) <= 1e-12);
    }
  }
  SUBCASE("zero output gradient gives zero gradients") {
    IUNet net = build(cfg2d(2, 2, CouplingKind::kAdditive), 1);
    perturb(net, rng);
    const Tensor x = random_input(net.cfg, rng);
    Tape tape;
    forward(net, x, &tape);
    const GradReport rep = backward_conventional(net, &tape, Tensor::zeros_like(x));
    for (double v : iunet::flatten(rep.grads)) CHECK(v == 0.0);
    CHECK(max_abs(rep.grad_input) == 0.0);
  }
  SUBCASE("usage errors") {
    const IUNet net = build(cfg2d(2, 1, CouplingKind::kAdditive), 1);
    const Tensor x = random_input(net.cfg, rng);
    CHECK_THROWS_AS(backward_conventional(net, nullptr, x), UsageError);
    Tape tape;
    CHECK_THROWS_AS(backward_conventional(net, &tape, x), UsageError);
    const IUNet other = build(net.cfg, 2);
    forward(other, x, &tape);
    CHECK_THROWS_AS(backward_conventional(net, &tape, x), UsageError);
    CHECK_THROWS_AS(backward_memeff(net, x, Tensor(4, {2, 2})), ShapeError);
  }
  SUBCASE("failed reconstruction names the stage") {
    IUNet net = build(cfg2d(2, 2, CouplingKind::kAdditive), 1);
    perturb(net, rng);
    net.right[0][1].subnet.norm.beta[0] = NAN;
    const Tensor x = random_input(net.cfg, rng);
    CHECK_THROWS_WITH_AS(backward_memeff(net, x, x),
                         doctest::Contains("reconstruction of stage right.0.1"), NumericError);
  }
}

TEST_CASE("stored activations: depth-independent in ME mode, linear in conventional") {
  Rng rng(67);
  std::vector<std::size_t> me_counts, conv_counts, conv_bytes;
  for (std::size_t delta : {2u, 4u, 8u}) {
    IUNet net = build(cfg2d(3, delta, CouplingKind::kAdditive), 1);
    perturb(net, rng);
    const Tensor x = random_input(net.cfg, rng);
    Tape tape;
    forward(net, x, &tape);
    const GradReport conv = backward_conventional(net, &tape, x);
    const GradReport me = backward_memeff(net, x, x);
    me_counts.push_back(me.stored_tensor_count);
    conv_counts.push_back(conv.stored_tensor_count);
    conv_bytes.push_back(conv.peak_stored_activation_bytes);
    CHECK(conv.peak_stored_activation_bytes >= me.peak_stored_activation_bytes);
  }
  CHECK(me_counts[0] == me_counts[1]);
  CHECK(me_counts[1] == me_counts[2]);
  CHECK(conv_counts[0] < conv_counts[1]);
  CHECK(conv_counts[1] < conv_counts[2]);
  // Linear growth: equal increments per doubling of delta relative to delta.
  CHECK(conv_counts[2] - conv_counts[1] == 2 * (conv_counts[1] - conv_counts[0]));
  CHECK(conv_bytes[2] - conv_bytes[1] == 2 * (conv_bytes[1] - conv_bytes[0]));
}

TEST_CASE("parameter paths are stable and unique") {
  IUNetConfig cfg = cfg2d(2, 2, CouplingKind::kAffine);
  cfg.share_theta = false;
  cfg.data_channels = 1;
  const IUNet net = build(cfg, 0);
  const auto slots = params(net);
  CHECK(slots.front().path == "expand_in.weight");
  CHECK(slots.back().path == "expand_out.weight");
  std::vector<std::string> paths;
  for (const auto& s : slots) paths.push_back(s.path);
  CHECK(std::find(paths.begin(), paths.end(), "left.0.1.conv.weight") != paths.end());
  CHECK(std::find(paths.begin(), paths.end(), "down.0.theta.1") != paths.end());
  CHECK(std::find(paths.begin(), paths.end(), "right.1.0.norm.gamma") != paths.end());
  std::sort(paths.begin(), paths.end());
  CHECK(std::adjacent_find(paths.begin(), paths.end()) == paths.end());
}

TEST_CASE("config JSON") {
  IUNetConfig cfg = cfg2d(3, 2, CouplingKind::kAffine);
  cfg.norm = NormScheme::kGroup;
  cfg.group_size = 2;
  cfg.data_channels = 3;
  const IUNetConfig back = config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));

  nlohmann::json j = to_json(cfg);
  j["widht"] = 3;
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("widht"), ConfigError);

  const auto short_form = nlohmann::json::parse(
      R"({"dim": 2, "scales": 3, "base_channels": 4, "strides": [2, 2],
          "split_fractions": "1/2", "input_spatial": [8, 8]})");
  CHECK(config_from_json(short_form).channel_ladder() == std::vector<std::size_t>{4, 8, 16});
  CHECK(parse_fraction("3/4") == Fraction{3, 4});
  CHECK_THROWS_AS(parse_fraction("0.5"), ConfigError);
  CHECK_THROWS_AS(parse_fraction("1/0"), ConfigError);
}

TEST_CASE("checkpoint round trip and validation") {
  Rng rng(68);
  IUNet net = build(cfg2d(3, 2, CouplingKind::kAffine), 4);
  perturb(net, rng);
  const auto path = temp_path("ckpt.bin");
  save_checkpoint(net, path);
  const Tensor x = random_input(net.cfg, rng);

  const IUNet loaded = load_checkpoint(path);
  CHECK(forward(loaded, x).y == forward(net, x).y);

  IUNet fresh = build(net.cfg, 99);
  load_checkpoint_into(fresh, path);
  CHECK(forward(fresh, x).y == forward(net, x).y);

  SUBCASE("config mismatch") {
    IUNetConfig c3 = IUNetConfig::uniform(3, 2, 8, 2, {1, 4}, 1, {4, 4, 4});
    IUNet net3 = build(c3, 0);
    CHECK_THROWS_AS(load_checkpoint_into(net3, path), ConfigError);
  }
  SUBCASE("truncated") {
    const auto size = std::filesystem::file_size(path);
    for (auto cut : {size - 1, size / 2, std::uintmax_t{10}, std::uintmax_t{3}}) {
      std::filesystem::resize_file(path, cut);
      CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);
      save_checkpoint(net, path);
    }
  }
  SUBCASE("bad magic and version") {
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(4);
      f.put(char{7});
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), CorruptFileError);
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.put('X');
    }
    CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);
  }
  std::filesystem::remove(path);
}
