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

#include "iunet/layers.hpp"

#include <cmath>
#include <string>

#include "iunet/error.hpp"

namespace iunet {

// ---------------------------------------------------------------------------
// split / concat

std::size_t split_channels(std::size_t channels, Fraction lambda) {
  if (lambda.den == 0) throw ConfigError("split fraction has a zero denominator");
  const std::size_t scaled = lambda.num * channels;
  if (scaled % lambda.den != 0) {
    throw ConfigError("split fraction " + lambda.to_string() + " of " +
                      std::to_string(channels) + " channels is not an integer");
  }
  const std::size_t keep = scaled / lambda.den;
  if (keep == 0 || keep >= channels) {
    throw ConfigError("split fraction " + lambda.to_string() + " of " +
                      std::to_string(channels) + " channels keeps " +
                      std::to_string(keep) + ", need 0 < keep < C");
  }
  return keep;
}

std::pair<Tensor, Tensor> split(const Tensor& x, Fraction lambda) {
  const std::size_t keep = split_channels(x.channels(), lambda);
  return {slice_channels(x, 0, keep), slice_channels(x, keep, x.channels() - keep)};
}

Tensor concat(const Tensor& keep, const Tensor& skip) {
  return concat_channels(keep, skip);
}

// ---------------------------------------------------------------------------
// normalization

NormParams::NormParams(NormScheme s, std::size_t channels, std::size_t gs, double e)
    : scheme(s), group_size(gs), eps(e), gamma(channels, 0.0), beta(channels, 0.0) {
  if (eps <= 0.0) throw ConfigError("normalization epsilon must be positive");
  groups();
}

std::size_t NormParams::groups() const {
  if (scheme == NormScheme::kLayer) return 1;
  if (group_size == 0 || channels() % group_size != 0) {
    throw ConfigError("group size " + std::to_string(group_size) +
                      " does not divide " + std::to_string(channels()) + " channels");
  }
  return channels() / group_size;
}

Tensor normalize(const NormParams& p, const Tensor& x, NormCache* cache) {
  if (x.channels() != p.channels()) {
    throw ShapeError("normalize expects " + std::to_string(p.channels()) +
                     " channels, got " + x.shape_string());
  }
  const std::size_t groups = p.groups();
  const std::size_t per_group = x.channels() / groups;
  const std::size_t count = per_group * x.spatial_size();
  Tensor x_hat = Tensor::zeros_like(x);
  std::vector<double> inv_std(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    auto src = x.data().subspan(gi * count, count);
    auto dst = x_hat.data().subspan(gi * count, count);
    double mean = 0.0;
    for (double v : src) mean += v;
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (double v : src) var += (v - mean) * (v - mean);
    var /= static_cast<double>(count);
    inv_std[gi] = 1.0 / std::sqrt(var + p.eps);
    for (std::size_t i = 0; i < count; ++i) dst[i] = (src[i] - mean) * inv_std[gi];
  }
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto xh = x_hat.channel(c);
    auto yc = y.channel(c);
    for (std::size_t i = 0; i < xh.size(); ++i) yc[i] = p.gamma[c] * xh[i] + p.beta[c];
  }
  if (cache) *cache = NormCache{std::move(x_hat), std::move(inv_std)};
  return y;
}

NormGrads normalize_backward(const NormParams& p, const NormCache& cache,
                             const Tensor& g) {
  const Tensor& x_hat = cache.x_hat;
  if (!g.same_shape(x_hat)) {
    throw ShapeError("normalize_backward: gradient " + g.shape_string() +
                     " does not match " + x_hat.shape_string());
  }
  const std::size_t channels = g.channels();
  NormGrads out{Tensor::zeros_like(g), std::vector<double>(channels, 0.0),
                std::vector<double>(channels, 0.0)};
  Tensor g_hat = Tensor::zeros_like(g);
  for (std::size_t c = 0; c < channels; ++c) {
    auto gc = g.channel(c);
    auto xh = x_hat.channel(c);
    auto gh = g_hat.channel(c);
    for (std::size_t i = 0; i < gc.size(); ++i) {
      out.grad_gamma[c] += gc[i] * xh[i];
      out.grad_beta[c] += gc[i];
      gh[i] = gc[i] * p.gamma[c];
    }
  }
  const std::size_t groups = cache.inv_std.size();
  const std::size_t count = g.numel() / groups;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    auto gh = g_hat.data().subspan(gi * count, count);
    auto xh = x_hat.data().subspan(gi * count, count);
    auto gx = out.grad_x.data().subspan(gi * count, count);
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      mean_g += gh[i];
      mean_gx += gh[i] * xh[i];
    }
    mean_g /= static_cast<double>(count);
    mean_gx /= static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      gx[i] = cache.inv_std[gi] * (gh[i] - mean_g - xh[i] * mean_gx);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// subnet

Tensor subnet_forward(const SubnetParams& p, const Tensor& x, SubnetCache* cache) {
  const Tensor conv = same_conv3(p.conv, x);
  NormCache nc;
  Tensor pre = normalize(p.norm, conv, cache ? &nc : nullptr);
  Tensor out = pre;
  for (double& v : out.data()) v = v > 0.0 ? v : p.slope * v;
  if (cache) *cache = SubnetCache{x, std::move(nc), std::move(pre)};
  return out;
}

SubnetGrads subnet_backward(const SubnetParams& p, const SubnetCache& cache,
                            const Tensor& g) {
  if (!g.same_shape(cache.pre_activation)) {
    throw ShapeError("subnet_backward: gradient " + g.shape_string() +
                     " does not match " + cache.pre_activation.shape_string());
  }
  Tensor g_pre = g;
  auto pre = cache.pre_activation.data();
  auto gp = g_pre.data();
  for (std::size_t i = 0; i < gp.size(); ++i) {
    if (!(pre[i] > 0.0)) gp[i] *= p.slope;
  }
  NormGrads ng = normalize_backward(p.norm, cache.norm, g_pre);
  Conv3Grads cg = same_conv3_backward(p.conv, cache.input, ng.grad_x);
  SubnetGrads out;
  out.grad_x = std::move(cg.grad_x);
  out.grad.conv = p.conv;
  out.grad.conv.w = std::move(cg.grad_w);
  out.grad.norm = p.norm;
  out.grad.norm.gamma = std::move(ng.grad_gamma);
  out.grad.norm.beta = std::move(ng.grad_beta);
  out.grad.slope = p.slope;
  return out;
}

namespace {

template <class S, class Slot>
void collect_subnet(S& p, const std::string& prefix, std::vector<Slot>& out) {
  std::vector<std::size_t> wshape{p.conv.out_channels, p.conv.in_channels};
  for (std::size_t a = 0; a < p.conv.dim; ++a) wshape.push_back(3);
  out.push_back(Slot{prefix + "conv.weight", wshape, std::span(p.conv.w)});
  out.push_back(Slot{prefix + "norm.gamma", {p.norm.gamma.size()}, std::span(p.norm.gamma)});
  out.push_back(Slot{prefix + "norm.beta", {p.norm.beta.size()}, std::span(p.norm.beta)});
}

}  // namespace

void collect_params(SubnetParams& p, const std::string& prefix,
                    std::vector<ParamSlot>& out) {
  collect_subnet(p, prefix, out);
}

void collect_params(const SubnetParams& p, const std::string& prefix,
                    std::vector<ConstParamSlot>& out) {
  collect_subnet(p, prefix, out);
}

// ---------------------------------------------------------------------------
// coupling

CouplingLayer make_coupling(const CouplingSpec& spec, std::size_t index, Rng& rng) {
  if (spec.channels < 2 || spec.channels % 2 != 0) {
    throw ShapeError("coupling layers need an even channel count >= 2, got " +
                     std::to_string(spec.channels));
  }
  const std::size_t half = spec.channels / 2;
  const std::size_t out = spec.kind == CouplingKind::kAffine ? 2 * half : half;
  CouplingLayer layer;
  layer.kind = spec.kind;
  layer.channels = spec.channels;
  layer.condition_on_first = index % 2 == 0;
  layer.clamp = spec.clamp;
  layer.subnet.conv = Conv3Weights(out, half, spec.dim);
  const double std = 1.0 / std::sqrt(static_cast<double>(half * layer.subnet.conv.taps()));
  for (double& w : layer.subnet.conv.w) w = rng.normal(0.0, std);
  layer.subnet.norm = NormParams(spec.norm, out, spec.group_size, spec.eps);
  layer.subnet.slope = spec.slope;
  return layer;
}

namespace {

struct Halves {
  std::size_t cond_begin;
  std::size_t trans_begin;
  std::size_t half;
};

Halves halves(const CouplingLayer& layer, const Tensor& x) {
  if (x.channels() % 2 != 0 || x.channels() < 2) {
    throw ShapeError("coupling layers need an even channel count >= 2, got " +
                     x.shape_string());
  }
  if (x.channels() != layer.channels) {
    throw ShapeError("coupling layer expects " + std::to_string(layer.channels) +
                     " channels, got " + x.shape_string());
  }
  const std::size_t half = x.channels() / 2;
  return layer.condition_on_first ? Halves{0, half, half} : Halves{half, 0, half};
}

Tensor assemble(const CouplingLayer& layer, const Tensor& cond, const Tensor& trans) {
  return layer.condition_on_first ? concat_channels(cond, trans)
                                  : concat_channels(trans, cond);
}

// Clamped log-scale from the raw subnet output.
Tensor clamp_scale(const Tensor& raw, double clamp) {
  Tensor s = raw;
  for (double& v : s.data()) v = clamp * std::tanh(v / clamp);
  return s;
}

}  // namespace

CouplingOutput coupling_forward(const CouplingLayer& layer, const Tensor& x,
                                CouplingCache* cache) {
  const Halves h = halves(layer, x);
  const Tensor x_cond = slice_channels(x, h.cond_begin, h.half);
  Tensor y_trans = slice_channels(x, h.trans_begin, h.half);
  SubnetCache sc;
  const Tensor f = subnet_forward(layer.subnet, x_cond, cache ? &sc : nullptr);
  if (cache) {
    cache->subnet = std::move(sc);
    cache->x_transformed = y_trans;
    cache->scale = Tensor();
  }
  double logdet = 0.0;
  if (layer.kind == CouplingKind::kAdditive) {
    y_trans += f;
  } else {
    const Tensor s = clamp_scale(slice_channels(f, 0, h.half), layer.clamp);
    const Tensor t = slice_channels(f, h.half, h.half);
    auto yd = y_trans.data();
    auto sd = s.data();
    auto td = t.data();
    for (std::size_t i = 0; i < yd.size(); ++i) {
      yd[i] = yd[i] * std::exp(sd[i]) + td[i];
      logdet += sd[i];
    }
    if (cache) cache->scale = s;
  }
  return {assemble(layer, x_cond, y_trans), logdet};
}

Tensor coupling_inverse(const CouplingLayer& layer, const Tensor& y, double* logdet) {
  const Halves h = halves(layer, y);
  const Tensor y_cond = slice_channels(y, h.cond_begin, h.half);
  Tensor x_trans = slice_channels(y, h.trans_begin, h.half);
  const Tensor f = subnet_forward(layer.subnet, y_cond);
  if (logdet) *logdet = 0.0;
  if (layer.kind == CouplingKind::kAdditive) {
    x_trans -= f;
  } else {
    const Tensor s = clamp_scale(slice_channels(f, 0, h.half), layer.clamp);
    const Tensor t = slice_channels(f, h.half, h.half);
    auto xd = x_trans.data();
    auto sd = s.data();
    auto td = t.data();
    for (std::size_t i = 0; i < xd.size(); ++i) xd[i] = (xd[i] - td[i]) * std::exp(-sd[i]);
    if (logdet) {
      for (double v : sd) *logdet -= v;
    }
  }
  return assemble(layer, y_cond, x_trans);
}

CouplingGrads coupling_backward_cached(const CouplingLayer& layer,
                                       const CouplingCache& cache,
                                       const Tensor& grad_y, double grad_logdet) {
  const Halves h = halves(layer, grad_y);
  const Tensor g_cond = slice_channels(grad_y, h.cond_begin, h.half);
  const Tensor g_trans = slice_channels(grad_y, h.trans_begin, h.half);
  Tensor g_x_trans = g_trans;
  Tensor g_f;
  if (layer.kind == CouplingKind::kAdditive) {
    g_f = g_trans;
  } else {
    const Tensor& s = cache.scale;
    Tensor g_raw = Tensor::zeros_like(s);
    auto sd = s.data();
    auto gt = g_trans.data();
    auto xt = cache.x_transformed.data();
    auto gx = g_x_trans.data();
    auto gr = g_raw.data();
    for (std::size_t i = 0; i < sd.size(); ++i) {
      const double e = std::exp(sd[i]);
      gx[i] = gt[i] * e;
      const double g_s = gt[i] * xt[i] * e + grad_logdet;
      const double r = sd[i] / layer.clamp;
      gr[i] = g_s * (1.0 - r * r);
    }
    g_f = concat_channels(g_raw, g_trans);
  }
  SubnetGrads sg = subnet_backward(layer.subnet, cache.subnet, g_f);
  Tensor g_x_cond = g_cond + sg.grad_x;
  return {assemble(layer, g_x_cond, g_x_trans), std::move(sg.grad)};
}

CouplingGrads coupling_backward(const CouplingLayer& layer, const Tensor& y,
                                const Tensor& grad_y, const Tensor& recomputed_x,
                                double grad_logdet) {
  if (!y.same_shape(grad_y) || !y.same_shape(recomputed_x)) {
    throw ShapeError("coupling_backward: output " + y.shape_string() + ", gradient " +
                     grad_y.shape_string() + " and input " +
                     recomputed_x.shape_string() + " must share one shape");
  }
  CouplingCache cache;
  coupling_forward(layer, recomputed_x, &cache);
  return coupling_backward_cached(layer, cache, grad_y, grad_logdet);
}

}  // namespace iunet
