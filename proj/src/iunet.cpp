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


#include "iunet/iunet.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "iunet/error.hpp"

namespace iunet {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string scale_label(std::size_t i) { return "scale " + std::to_string(i + 1); }

std::size_t subnet_out_channels(const IUNetConfig& cfg, std::size_t channels) {
  return cfg.coupling == CouplingKind::kAffine ? channels : channels / 2;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

std::vector<std::size_t> IUNetConfig::channel_ladder() const {
  std::vector<std::size_t> c{base_channels};
  for (std::size_t i = 0; i + 1 < scales; ++i) {
    const std::size_t sigma = strides.at(i).sigma();
    std::size_t next;
    try {
      next = downsample_before_split ? split_channels(sigma * c[i], split_fractions.at(i))
                                     : sigma * split_channels(c[i], split_fractions.at(i));
    } catch (const ConfigError& e) {
      throw ConfigError(scale_label(i) + ": " + e.what());
    }
    c.push_back(next);
  }
  return c;
}

std::vector<std::vector<std::size_t>> IUNetConfig::spatial_ladder() const {
  std::vector<std::vector<std::size_t>> n{input_spatial};
  for (std::size_t i = 0; i + 1 < scales; ++i) {
    std::vector<std::size_t> next = n.back();
    for (std::size_t a = 0; a < next.size(); ++a) next[a] /= strides.at(i)[a];
    n.push_back(std::move(next));
  }
  return n;
}

std::vector<std::size_t> IUNetConfig::input_shape() const {
  std::vector<std::size_t> s{input_channels()};
  s.insert(s.end(), input_spatial.begin(), input_spatial.end());
  return s;
}

void IUNetConfig::validate() const {
  if (dim < 1 || dim > 3) throw ConfigError("dim must be 1, 2 or 3, got " + std::to_string(dim));
  if (scales < 1) throw ConfigError("need at least one scale");
  if (strides.size() + 1 != scales) {
    throw ConfigError("expected " + std::to_string(scales - 1) + " stride specs, got " +
                      std::to_string(strides.size()));
  }
  if (split_fractions.size() + 1 != scales) {
    throw ConfigError("expected " + std::to_string(scales - 1) + " split fractions, got " +
                      std::to_string(split_fractions.size()));
  }
  if (input_spatial.size() != dim) {
    throw ConfigError("input_spatial has " + std::to_string(input_spatial.size()) +
                      " extents for dim " + std::to_string(dim));
  }
  if (base_channels < 2) throw ConfigError("base_channels must be at least 2");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(clamp > 0.0)) throw ConfigError("clamp must be positive");
  if (!(theta_init_std >= 0.0)) throw ConfigError("theta_init_std must be non-negative");
  if (norm == NormScheme::kGroup && group_size == 0) {
    throw ConfigError("group normalization needs group_size > 0");
  }

  std::vector<std::size_t> extent = input_spatial;
  for (std::size_t a = 0; a < dim; ++a) {
    if (extent[a] == 0) throw ConfigError("input_spatial extents must be positive");
  }
  for (std::size_t i = 0; i + 1 < scales; ++i) {
    if (strides[i].dim() != dim) {
      throw ConfigError(scale_label(i) + ": stride " + strides[i].to_string() +
                        " does not have " + std::to_string(dim) + " axes");
    }
    for (std::size_t a = 0; a < dim; ++a) {
      if (extent[a] % strides[i][a] != 0) {
        throw ConfigError(scale_label(i) + ": extent " + std::to_string(extent[a]) +
                          " on axis " + std::to_string(a) + " is not divisible by stride " +
                          strides[i].to_string());
      }
      extent[a] /= strides[i][a];
    }
  }

  const auto ladder = channel_ladder();
  for (std::size_t i = 0; i < scales; ++i) {
    if (ladder[i] < 2) {
      throw ConfigError(scale_label(i) + ": " + std::to_string(ladder[i]) +
                        " channels, need at least 2");
    }
    if (couplings_per_block > 0 && ladder[i] % 2 != 0) {
      throw ConfigError(scale_label(i) + ": coupling layers need an even channel count, got " +
                        std::to_string(ladder[i]));
    }
    if (norm == NormScheme::kGroup && couplings_per_block > 0) {
      const std::size_t out = subnet_out_channels(*this, ladder[i]);
      if (out % group_size != 0) {
        throw ConfigError(scale_label(i) + ": group_size " + std::to_string(group_size) +
                          " does not divide the " + std::to_string(out) +
                          " subnet channels");
      }
    }
  }
}

IUNetConfig IUNetConfig::uniform(std::size_t dim, std::size_t scales,
                                 std::size_t base_channels, std::size_t stride,
                                 Fraction lambda, std::size_t couplings,
                                 std::vector<std::size_t> input_spatial) {
  IUNetConfig cfg;
  cfg.dim = dim;
  cfg.scales = scales;
  cfg.base_channels = base_channels;
  cfg.couplings_per_block = couplings;
  cfg.input_spatial = std::move(input_spatial);
  for (std::size_t i = 0; i + 1 < scales; ++i) {
    cfg.strides.push_back(StrideSpec::uniform(dim, stride));
    cfg.split_fractions.push_back(lambda);
  }
  return cfg;
}

Fraction parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  auto parse = [&](const std::string& part) -> std::size_t {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("malformed split fraction '" + text + "'");
    }
    return std::stoull(part);
  };
  Fraction f;
  if (slash == std::string::npos) {
    f.num = parse(text);
    f.den = 1;
  } else {
    f.num = parse(text.substr(0, slash));
    f.den = parse(text.substr(slash + 1));
  }
  if (f.den == 0) throw ConfigError("split fraction '" + text + "' has a zero denominator");
  return f;
}

namespace {

const char* coupling_name(CouplingKind k) {
  return k == CouplingKind::kAffine ? "affine" : "additive";
}

const char* norm_name(NormScheme s) { return s == NormScheme::kGroup ? "group" : "layer"; }

}  // namespace

nlohmann::json to_json(const IUNetConfig& cfg) {
  nlohmann::json strides = nlohmann::json::array();
  for (const auto& s : cfg.strides) strides.push_back(s.values());
  nlohmann::json fractions = nlohmann::json::array();
  for (const auto& f : cfg.split_fractions) fractions.push_back(f.to_string());
  return {
      {"dim", cfg.dim},
      {"scales", cfg.scales},
      {"base_channels", cfg.base_channels},
      {"strides", strides},
      {"split_fractions", fractions},
      {"couplings_per_block", cfg.couplings_per_block},
      {"coupling", coupling_name(cfg.coupling)},
      {"norm", norm_name(cfg.norm)},
      {"group_size", cfg.group_size},
      {"share_theta", cfg.share_theta},
      {"downsample_before_split", cfg.downsample_before_split},
      {"data_channels", cfg.data_channels},
      {"input_spatial", cfg.input_spatial},
      {"clamp", cfg.clamp},
      {"slope", cfg.slope},
      {"eps", cfg.eps},
      {"theta_init_std", cfg.theta_init_std},
  };
}

IUNetConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network config must be a JSON object");
  IUNetConfig cfg;
  bool have_strides = false, have_fractions = false;
  nlohmann::json strides, fractions;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dim") cfg.dim = v.get<std::size_t>();
      else if (key == "scales") cfg.scales = v.get<std::size_t>();
      else if (key == "base_channels") cfg.base_channels = v.get<std::size_t>();
      else if (key == "strides") { strides = v; have_strides = true; }
      else if (key == "split_fractions") { fractions = v; have_fractions = true; }
      else if (key == "couplings_per_block") cfg.couplings_per_block = v.get<std::size_t>();
      else if (key == "coupling") {
        const auto s = v.get<std::string>();
        if (s == "additive") cfg.coupling = CouplingKind::kAdditive;
        else if (s == "affine") cfg.coupling = CouplingKind::kAffine;
        else throw ConfigError("unknown coupling kind '" + s + "'");
      } else if (key == "norm") {
        const auto s = v.get<std::string>();
        if (s == "layer") cfg.norm = NormScheme::kLayer;
        else if (s == "group") cfg.norm = NormScheme::kGroup;
        else throw ConfigError("unknown norm scheme '" + s + "'");
      } else if (key == "group_size") cfg.group_size = v.get<std::size_t>();
      else if (key == "share_theta") cfg.share_theta = v.get<bool>();
      else if (key == "downsample_before_split") cfg.downsample_before_split = v.get<bool>();
      else if (key == "data_channels") cfg.data_channels = v.get<std::size_t>();
      else if (key == "input_spatial") cfg.input_spatial = v.get<std::vector<std::size_t>>();
      else if (key == "clamp") cfg.clamp = v.get<double>();
      else if (key == "slope") cfg.slope = v.get<double>();
      else if (key == "eps") cfg.eps = v.get<double>();
      else if (key == "theta_init_std") cfg.theta_init_std = v.get<double>();
      else throw ConfigError("unknown network config key '" + key + "'");
    }
    const std::size_t pairs = cfg.scales > 0 ? cfg.scales - 1 : 0;
    // A single stride (flat list) or fraction (string) applies to every scale.
    if (have_strides) {
      if (!strides.is_array()) throw ConfigError("strides must be an array");
      if (!strides.empty() && strides.front().is_number()) {
        const StrideSpec s(strides.get<std::vector<std::size_t>>());
        cfg.strides.assign(pairs, s);
      } else {
        for (const auto& s : strides) cfg.strides.emplace_back(s.get<std::vector<std::size_t>>());
      }
    } else {
      cfg.strides.assign(pairs, StrideSpec::uniform(cfg.dim, 2));
    }
    if (have_fractions) {
      if (fractions.is_string()) {
        cfg.split_fractions.assign(pairs, parse_fraction(fractions.get<std::string>()));
      } else {
        for (const auto& f : fractions) cfg.split_fractions.push_back(parse_fraction(f.get<std::string>()));
      }
    } else {
      cfg.split_fractions.assign(pairs, Fraction{1, 2});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// build / params

IUNet build(const IUNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  IUNet net;
  net.cfg = cfg;
  net.ladder = cfg.channel_ladder();
  const Rng root(seed);

  CouplingSpec spec;
  spec.kind = cfg.coupling;
  spec.dim = cfg.dim;
  spec.norm = cfg.norm;
  spec.group_size = cfg.group_size;
  spec.eps = cfg.eps;
  spec.slope = cfg.slope;
  spec.clamp = cfg.clamp;

  // Each block draws from its own stream so that changing one block's size
  // leaves the others' initialization untouched.
  for (int side = 0; side < 2; ++side) {
    auto& blocks = side == 0 ? net.left : net.right;
    for (std::size_t i = 0; i < cfg.scales; ++i) {
      Rng rng = root.fork(1000 * (side + 1) + i);
      spec.channels = net.ladder[i];
      std::vector<CouplingLayer> block;
      for (std::size_t j = 0; j < cfg.couplings_per_block; ++j) {
        block.push_back(make_coupling(spec, j, rng));
      }
      blocks.push_back(std::move(block));
    }
  }
  for (std::size_t i = 0; i + 1 < cfg.scales; ++i) {
    const std::size_t high = cfg.downsample_before_split
                                 ? net.ladder[i]
                                 : split_channels(net.ladder[i], cfg.split_fractions[i]);
    Rng rd = root.fork(3000 + i);
    net.down.push_back(make_resample(cfg.strides[i], high, cfg.share_theta,
                                     ResampleMode::kDown, rd, cfg.theta_init_std));
    // U_i owns its thetas but starts from a copy of D_i's, so U_i = D_i^-1
    // and the whole core is the identity at initialization.
    ResampleOp up = net.down.back();
    up.mode = ResampleMode::kUp;
    net.up.push_back(std::move(up));
  }
  if (cfg.data_channels > 0) {
    net.expand_in = Conv3Weights::centered_identity(cfg.base_channels, cfg.data_channels, cfg.dim);
    net.expand_out =
        Conv3Weights::centered_identity(cfg.data_channels, cfg.base_channels, cfg.dim);
  }
  return net;
}

namespace {

template <class Net, class Slot>
void collect_all(Net& net, std::vector<Slot>& out) {
  auto conv_slot = [&](auto& w, const std::string& path) {
    std::vector<std::size_t> shape{w.out_channels, w.in_channels};
    for (std::size_t a = 0; a < w.dim; ++a) shape.push_back(3);
    out.push_back(Slot{path, shape, w.w});
  };
  auto resample_slots = [&](auto& ops, const std::string& side) {
    for (std::size_t i = 0; i < ops.size(); ++i) {
      for (std::size_t c = 0; c < ops[i].thetas.size(); ++c) {
        auto& t = ops[i].thetas[c];
        out.push_back(Slot{side + "." + std::to_string(i) + ".theta." + std::to_string(c),
                           {t.rows(), t.cols()}, t.data()});
      }
    }
  };
  auto coupling_slots = [&](auto& blocks, const std::string& side) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      for (std::size_t j = 0; j < blocks[i].size(); ++j) {
        collect_params(blocks[i][j].subnet,
                       side + "." + std::to_string(i) + "." + std::to_string(j) + ".", out);
      }
    }
  };
  if (net.expand_in) conv_slot(*net.expand_in, "expand_in.weight");
  coupling_slots(net.left, "left");
  resample_slots(net.down, "down");
  coupling_slots(net.right, "right");
  resample_slots(net.up, "up");
  if (net.expand_out) conv_slot(*net.expand_out, "expand_out.weight");
}

}  // namespace

std::vector<ParamSlot> params(IUNet& net) {
  std::vector<ParamSlot> out;
  collect_all(net, out);
  return out;
}

std::vector<ConstParamSlot> params(const IUNet& net) {
  std::vector<ConstParamSlot> out;
  collect_all(net, out);
  return out;
}

std::size_t param_count(const IUNet& net) {
  std::size_t n = 0;
  for (const auto& s : params(net)) n += s.data.size();
  return n;
}

std::vector<double> flatten(const std::vector<NamedArray>& arrays) {
  std::vector<double> out;
  for (const auto& a : arrays) out.insert(out.end(), a.values.begin(), a.values.end());
  return out;
}

// ---------------------------------------------------------------------------
// stage plan

std::string Stage::name() const {
  const std::string i = std::to_string(scale);
  switch (kind) {
    case StageKind::kCoupling:
      return (right ? "right." : "left.") + i + "." + std::to_string(index);
    case StageKind::kSplit: return "split." + i;
    case StageKind::kResample: return (right ? "up." : "down.") + i;
    case StageKind::kConcat: return "concat." + i;
  }
  return "?";
}

std::vector<Stage> stage_plan(const IUNet& net) {
  const std::size_t m = net.cfg.scales;
  const bool dbs = net.cfg.downsample_before_split;
  std::vector<Stage> plan;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < net.left[i].size(); ++j) {
      plan.push_back({StageKind::kCoupling, i, j, false});
    }
    if (i + 1 < m) {
      if (dbs) plan.push_back({StageKind::kResample, i, 0, false});
      plan.push_back({StageKind::kSplit, i, 0, false});
      if (!dbs) plan.push_back({StageKind::kResample, i, 0, false});
    }
  }
  for (std::size_t k = m; k-- > 0;) {
    if (k + 1 < m) {
      if (!dbs) plan.push_back({StageKind::kResample, k, 0, true});
      plan.push_back({StageKind::kConcat, k, 0, true});
      if (dbs) plan.push_back({StageKind::kResample, k, 0, true});
    }
    for (std::size_t j = 0; j < net.right[k].size(); ++j) {
      plan.push_back({StageKind::kCoupling, k, j, true});
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// passes

namespace {

struct State {
  Tensor x;
  std::vector<Tensor> skips;  // c_i, live between split_i and concat_i
};

struct Held {
  std::size_t bytes = 0;
  std::size_t tensors = 0;
};

/// Working tensor plus live skips.
Held held(const State& st) {
  Held h{st.x.bytes(), 1};
  for (const Tensor& c : st.skips) {
    if (!c.empty()) {
      h.bytes += c.bytes();
      h.tensors += 1;
    }
  }
  return h;
}

const CouplingLayer& layer_of(const IUNet& net, const Stage& s) {
  return (s.right ? net.right : net.left)[s.scale][s.index];
}

CouplingLayer& layer_of(IUNet& net, const Stage& s) {
  return (s.right ? net.right : net.left)[s.scale][s.index];
}

const ResampleOp& op_of(const IUNet& net, const Stage& s) {
  return s.right ? net.up[s.scale] : net.down[s.scale];
}

ResampleOp& op_of(IUNet& net, const Stage& s) {
  return s.right ? net.up[s.scale] : net.down[s.scale];
}

void check_input(const IUNet& net, const Tensor& x) {
  if (x.shape() != net.cfg.input_shape()) {
    throw ShapeError("network input has shape " + x.shape_string() + ", expected " +
                     Tensor(net.cfg.input_channels(), net.cfg.input_spatial).shape_string());
  }
}

/// Channels of the part kept at a split/concat stage at `scale`, given the
/// total channel count there.
std::size_t kept_channels(const IUNet& net, std::size_t scale, std::size_t total) {
  return split_channels(total, net.cfg.split_fractions[scale]);
}

/// One forward step. The working tensor in `st` is replaced; skips are
/// pushed or consumed. Coupling stages fill `cache` when given.
void stage_forward(const IUNet& net, const Stage& s, State& st, double& logdet,
                   CouplingCache* cache) {
  switch (s.kind) {
    case StageKind::kCoupling: {
      CouplingOutput out = coupling_forward(layer_of(net, s), st.x, cache);
      st.x = std::move(out.y);
      logdet += out.logdet;
      break;
    }
    case StageKind::kSplit: {
      auto [keep, skip] = split(st.x, net.cfg.split_fractions[s.scale]);
      st.x = std::move(keep);
      st.skips[s.scale] = std::move(skip);
      break;
    }
    case StageKind::kResample:
      st.x = apply(op_of(net, s), st.x);
      break;
    case StageKind::kConcat:
      st.x = concat(st.x, st.skips[s.scale]);
      st.skips[s.scale] = Tensor();
      break;
  }
}

/// Undoes stage_forward: rebuilds the stage input from its output.
void stage_inverse(const IUNet& net, const Stage& s, State& st, double* logdet = nullptr) {
  switch (s.kind) {
    case StageKind::kCoupling: {
      double ld = 0.0;
      st.x = coupling_inverse(layer_of(net, s), st.x, logdet ? &ld : nullptr);
      if (logdet) *logdet += ld;
      break;
    }
    case StageKind::kSplit:
      st.x = concat(st.x, st.skips[s.scale]);
      st.skips[s.scale] = Tensor();
      break;
    case StageKind::kResample:
      st.x = invert(op_of(net, s), st.x);
      break;
    case StageKind::kConcat: {
      const std::size_t total = st.x.channels();
      const std::size_t keep = kept_channels(net, s.scale, total);
      st.skips[s.scale] = slice_channels(st.x, keep, total - keep);
      st.x = slice_channels(st.x, 0, keep);
      break;
    }
  }
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

void add_into(SubnetParams& dst, const SubnetParams& src) {
  add_into(dst.conv.w, src.conv.w);
  add_into(dst.norm.gamma, src.norm.gamma);
  add_into(dst.norm.beta, src.norm.beta);
}

IUNet zeros_like(const IUNet& net) {
  IUNet g = net;
  for (auto& slot : params(g)) std::fill(slot.data.begin(), slot.data.end(), 0.0);
  return g;
}

struct GradState {
  Tensor gx;
  std::vector<Tensor> gskips;
};

/// Backward through split/concat, which need no activations.
void structural_backward(const IUNet& net, const Stage& s, GradState& g) {
  if (s.kind == StageKind::kConcat) {
    const std::size_t total = g.gx.channels();
    const std::size_t keep = kept_channels(net, s.scale, total);
    g.gskips[s.scale] = slice_channels(g.gx, keep, total - keep);
    g.gx = slice_channels(g.gx, 0, keep);
  } else {
    g.gx = concat(g.gx, g.gskips[s.scale]);
    g.gskips[s.scale] = Tensor();
  }
}

void resample_backward(const IUNet& net, IUNet& grads, const Stage& s, const Tensor& x_in,
                       GradState& g) {
  ResampleGrads r = apply_backward(op_of(net, s), x_in, g.gx);
  g.gx = std::move(r.grad_x);
  auto& dst = op_of(grads, s).thetas;
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += r.grad_thetas[k];
}

void coupling_backward_step(const IUNet& net, IUNet& grads, const Stage& s,
                            const CouplingCache& cache, double grad_logdet, GradState& g) {
  CouplingGrads c = coupling_backward_cached(layer_of(net, s), cache, g.gx, grad_logdet);
  g.gx = std::move(c.grad_x);
  add_into(layer_of(grads, s).subnet, c.grad);
}

Tensor conv_backward_into(const Conv3Weights& w, Conv3Weights& gw, const Tensor& x,
                          const Tensor& g) {
  Conv3Grads r = same_conv3_backward(w, x, g);
  add_into(gw.w, r.grad_w);
  return std::move(r.grad_x);
}

double rel_diff(const Tensor& a, const Tensor& b) {
  if (!a.all_finite()) return INFINITY;
  return norm(a - b) / std::max(norm(b), 1e-300);
}

}  // namespace

ForwardResult forward(const IUNet& net, const Tensor& x, Tape* tape) {
  const auto t0 = Clock::now();
  check_input(net, x);
  const auto plan = stage_plan(net);
  State st;
  st.skips.resize(net.cfg.scales);
  st.x = net.expand_in ? same_conv3(*net.expand_in, x) : x;
  double logdet = 0.0;

  auto keep = [&](const Tensor& t) {
    tape->stored_bytes += t.bytes();
    tape->stored_tensors += 1;
  };
  if (tape) {
    *tape = Tape();
    tape->net = &net;
    tape->coupling_caches.resize(plan.size());
    tape->resample_inputs.resize(plan.size());
    if (net.expand_in) {
      tape->input = x;
      keep(x);
    }
    tape->core_input = st.x;
  }
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const Stage& s = plan[k];
    CouplingCache* cache = nullptr;
    if (tape && s.kind == StageKind::kCoupling) cache = &tape->coupling_caches[k];
    if (tape && s.kind == StageKind::kResample) {
      tape->resample_inputs[k] = st.x;
      keep(st.x);
    }
    stage_forward(net, s, st, logdet, cache);
    if (tape) {
      if (cache) {
        tape->stored_bytes += cache->bytes();
        tape->stored_tensors += cache->tensor_count();
      }
      const Held h = held(st);
      tape->ledger.record(tape->stored_bytes + h.bytes, tape->stored_tensors + h.tensors);
    }
  }
  ForwardResult out;
  out.logdet = logdet;
  if (net.expand_out) {
    if (tape) {
      tape->core_output = st.x;
      keep(st.x);
    }
    out.y = same_conv3(*net.expand_out, st.x);
  } else {
    out.y = std::move(st.x);
  }
  if (tape) {
    tape->output = out.y;
    tape->logdet = logdet;
    keep(out.y);
    tape->ledger.record(tape->stored_bytes, tape->stored_tensors);
    tape->forward_time_s = seconds_since(t0);
  }
  return out;
}

Tensor inverse(const IUNet& net, const Tensor& y, double* logdet) {
  if (net.expand_in || net.expand_out) {
    throw UsageError("inverse is only defined for nets without expansion convolutions");
  }
  check_input(net, y);
  const auto plan = stage_plan(net);
  State st;
  st.x = y;
  st.skips.resize(net.cfg.scales);
  if (logdet) *logdet = 0.0;
  for (std::size_t k = plan.size(); k-- > 0;) stage_inverse(net, plan[k], st, logdet);
  return std::move(st.x);
}

GradReport backward_memeff(const IUNet& net, const Tensor& x, const Tensor& grad_out,
                           double grad_logdet) {
  const auto t0 = Clock::now();
  check_input(net, x);
  const auto plan = stage_plan(net);
  ActivationLedger ledger;

  // Forward, keeping only the working tensor and the live skip tensors.
  State st;
  st.skips.resize(net.cfg.scales);
  st.x = net.expand_in ? same_conv3(*net.expand_in, x) : x;
  double logdet = 0.0;
  for (const Stage& s : plan) {
    stage_forward(net, s, st, logdet, nullptr);
    const Held h = held(st);
    ledger.record(h.bytes, h.tensors);
  }

  GradReport report;
  report.logdet = logdet;
  IUNet grads = zeros_like(net);
  GradState g;
  g.gskips.resize(net.cfg.scales);
  if (net.expand_out) {
    report.output = same_conv3(*net.expand_out, st.x);
    if (!grad_out.same_shape(report.output)) {
      throw ShapeError("grad_out has shape " + grad_out.shape_string() + ", expected " +
                       report.output.shape_string());
    }
    g.gx = conv_backward_into(*net.expand_out, *grads.expand_out, st.x, grad_out);
  } else {
    report.output = st.x;
    if (!grad_out.same_shape(report.output)) {
      throw ShapeError("grad_out has shape " + grad_out.shape_string() + ", expected " +
                       report.output.shape_string());
    }
    g.gx = grad_out;
  }

  // Backward sweep: invert each stage to recover its input, then take its VJP.
  for (std::size_t k = plan.size(); k-- > 0;) {
    const Stage& s = plan[k];
    const Tensor y = st.x;
    stage_inverse(net, s, st);
    // The stage output and its reconstructed input coexist here.
    const Held h = held(st);
    ledger.record(h.bytes + y.bytes(), h.tensors + 1);

    switch (s.kind) {
      case StageKind::kCoupling: {
        CouplingCache cache;
        const Tensor y_check = coupling_forward(layer_of(net, s), st.x, &cache).y;
        const double err = rel_diff(y_check, y);
        if (!(err <= kReconstructionTol)) {
          throw NumericError("reconstruction of stage " + s.name() +
                             " failed: relative round-trip error " + std::to_string(err));
        }
        ledger.record(h.bytes + y.bytes() + cache.bytes(),
                      h.tensors + 1 + cache.tensor_count());
        coupling_backward_step(net, grads, s, cache, grad_logdet, g);
        break;
      }
      case StageKind::kResample: {
        const double err = rel_diff(apply(op_of(net, s), st.x), y);
        if (!(err <= kReconstructionTol)) {
          throw NumericError("reconstruction of stage " + s.name() +
                             " failed: relative round-trip error " + std::to_string(err));
        }
        resample_backward(net, grads, s, st.x, g);
        break;
      }
      default:
        structural_backward(net, s, g);
        break;
    }
  }

  if (net.expand_in) {
    g.gx = conv_backward_into(*net.expand_in, *grads.expand_in, x, g.gx);
  }
  report.grad_input = std::move(g.gx);
  report.grads = to_named_arrays(params(std::as_const(grads)));
  report.peak_stored_activation_bytes = ledger.peak_bytes();
  report.stored_tensor_count = ledger.peak_tensors();
  report.wall_time_s = seconds_since(t0);
  return report;
}

GradReport backward_conventional(const IUNet& net, const Tape* tape, const Tensor& grad_out,
                                 double grad_logdet) {
  if (tape == nullptr || tape->net == nullptr) {
    throw UsageError("backward_conventional needs a tape recorded by forward");
  }
  if (tape->net != &net) throw UsageError("tape was recorded for a different network");
  if (!grad_out.same_shape(tape->output)) {
    throw ShapeError("grad_out has shape " + grad_out.shape_string() + ", expected " +
                     tape->output.shape_string());
  }
  const auto t0 = Clock::now();
  const auto plan = stage_plan(net);
  IUNet grads = zeros_like(net);
  GradState g;
  g.gskips.resize(net.cfg.scales);
  g.gx = net.expand_out
             ? conv_backward_into(*net.expand_out, *grads.expand_out, tape->core_output, grad_out)
             : grad_out;
  for (std::size_t k = plan.size(); k-- > 0;) {
    const Stage& s = plan[k];
    switch (s.kind) {
      case StageKind::kCoupling:
        coupling_backward_step(net, grads, s, tape->coupling_caches[k], grad_logdet, g);
        break;
      case StageKind::kResample:
        resample_backward(net, grads, s, tape->resample_inputs[k], g);
        break;
      default:
        structural_backward(net, s, g);
        break;
    }
  }
  if (net.expand_in) {
    g.gx = conv_backward_into(*net.expand_in, *grads.expand_in, tape->input, g.gx);
  }
  GradReport report;
  report.grad_input = std::move(g.gx);
  report.output = tape->output;
  report.logdet = tape->logdet;
  report.grads = to_named_arrays(params(std::as_const(grads)));
  report.peak_stored_activation_bytes = tape->ledger.peak_bytes();
  report.stored_tensor_count = tape->ledger.peak_tensors();
  report.wall_time_s = tape->forward_time_s + seconds_since(t0);
  return report;
}

}  // namespace iunet
