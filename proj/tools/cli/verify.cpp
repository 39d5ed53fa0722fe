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


// `iunet verify`: self-checks of the numerical core against independent
// references (closed forms, finite differences, brute-force Jacobians).

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "common.hpp"
#include "iunet/cli.hpp"
#include "iunet/conv.hpp"
#include "iunet/data.hpp"
#include "iunet/flow.hpp"
#include "iunet/iunet.hpp"
#include "iunet/layers.hpp"
#include "iunet/linalg.hpp"
#include "iunet/resample.hpp"
#include "iunet/rng.hpp"

namespace iunet::cli {

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Check {
  std::string name;
  std::function<Outcome()> run;
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

/// Passes when value <= tol; NaN fails.
Outcome within(double value, double tol, const std::string& what) {
  return {value <= tol, what + " = " + sci(value) + " (tol " + sci(tol) + ")"};
}

Outcome both(const Outcome& a, const Outcome& b) {
  return {a.passed && b.passed, a.detail + ", " + b.detail};
}

/// max that lets a NaN through.
double worst_of(double acc, double v) { return std::isnan(acc) || std::isnan(v) ? NAN : std::max(acc, v); }

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

Tensor random_tensor(std::size_t c, std::vector<std::size_t> spatial, Rng& rng) {
  Tensor t(c, std::move(spatial));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

double rel(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

std::vector<double> central_diff(std::span<double> p, const std::function<double()>& f,
                                 double h = 1e-6) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double fp = f();
    p[i] = saved - h;
    const double fm = f();
    p[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// log|det| of the central-difference Jacobian of f at x.
double fd_logdet(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                 double h = 1e-5) {
  const std::size_t n = x.numel();
  Matrix j(n, n);
  Tensor xp = x;
  for (std::size_t c = 0; c < n; ++c) {
    const double saved = xp[c];
    xp[c] = saved + h;
    const Tensor fp = f(xp);
    xp[c] = saved - h;
    const Tensor fm = f(xp);
    xp[c] = saved;
    for (std::size_t r = 0; r < n; ++r) j(r, c) = (fp[r] - fm[r]) / (2.0 * h);
  }
  return slogdet(j).log_abs;
}

void perturb(std::vector<ParamSlot> slots, Rng& rng, double scale = 0.3) {
  for (auto& slot : slots) {
    for (double& v : slot.data) v += rng.normal(0.0, scale);
  }
}

Matrix m_haar() {
  return Matrix{{1, 1, -1, -1}, {1, 1, 1, 1}, {1, -1, 1, -1}, {1, -1, -1, 1}} * 0.5;
}

// ---------------------------------------------------------------------------

std::vector<Check> linalg_checks(std::uint64_t seed) {
  return {
      {"haar_exponential",
       [] {
         return within(max_abs_diff(matrix_exp(skew(detail::haar_theta())), m_haar()), 1e-12,
                       "max |exp(S) - M_haar|");
       }},
      {"frechet_vs_central_difference",
       [seed] {
         Rng rng(seed);
         double worst = 0.0;
         for (int trial = 0; trial < 5; ++trial) {
           const Matrix s = skew(random_matrix(4, 4, rng));
           const Matrix h = random_matrix(4, 4, rng);
           const double eps = 1e-6;
           Matrix fd = matrix_exp(s + h * eps) - matrix_exp(s - h * eps);
           fd *= 1.0 / (2.0 * eps);
           worst = worst_of(worst, rel(matrix_exp_frechet(s, h).data(), fd.data()));
         }
         return within(worst, 1e-6, "relative error");
       }},
  };
}

std::vector<Check> orthogonality_checks(const VerifyOptions& opts) {
  return {
      {"random_theta_suite",
       [opts] {
         Rng rng(opts.seed + 1);
         double worst_orth = 0.0, worst_det = 0.0;
         for (int k = 0; k < 200; ++k) {
           const std::size_t d = 1 + static_cast<std::size_t>(k % 3);
           const std::size_t s = (k / 3) % 2 == 0 ? 2 : 3;
           std::size_t n = 1;
           for (std::size_t a = 0; a < d; ++a) n *= s;
           // The truncated series is accurate for ||S||_F <= 10.
           Matrix theta = random_matrix(n, n, rng);
           theta *= rng.uniform(0.1, 10.0) / skew(theta).frobenius_norm();
           if (opts.inject_nonfinite_theta && k == 0) theta(0, 1) = NAN;
           const Matrix q = matrix_exp(skew(theta));
           const SlogDet sd = slogdet(q);
           worst_orth = worst_of(worst_orth, orthogonality_error(q));
           worst_det = worst_of(worst_det, std::abs(sd.sign * std::exp(sd.log_abs) - 1.0));
         }
         return both(within(worst_orth, 1e-10, "max ||Q^T Q - I||_F"),
                     within(worst_det, 1e-10, "max |det - 1|"));
       }},
  };
}

std::vector<Check> tensor_checks(std::uint64_t seed) {
  return {
      {"conv_block_adjoint",
       [seed] {
         Rng rng(seed + 2);
         double worst = 0.0;
         for (const StrideSpec& s : {StrideSpec{2}, StrideSpec{2, 3}, StrideSpec{2, 2, 2}}) {
           std::vector<std::size_t> ext, small;
           for (std::size_t a = 0; a < s.dim(); ++a) {
             ext.push_back(s[a] * 3);
             small.push_back(3);
           }
           const Kernel k = reorder_to_kernel(random_matrix(s.sigma(), s.sigma(), rng), s);
           const Tensor x = random_tensor(1, ext, rng);
           const Tensor y = random_tensor(s.sigma(), small, rng);
           const double lhs = dot(conv_block(k, x, s), y);
           const double rhs = dot(x, conv_block_transpose(k, y, s));
           worst = worst_of(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0));
         }
         return within(worst, 1e-12, "|<Kx, y> - <x, K^T y>|");
       }},
      {"kernel_adjoint",
       [seed] {
         Rng rng(seed + 3);
         const StrideSpec s{2, 2};
         const Kernel k = reorder_to_kernel(random_matrix(4, 4, rng), s);
         const Tensor x = random_tensor(1, {6, 4}, rng);
         const Tensor g = random_tensor(4, {3, 2}, rng);
         const Kernel gk = conv_kernel_adjoint(g, x, s);
         double rhs = 0.0;
         for (std::size_t i = 0; i < k.weights().size(); ++i) rhs += k.weights()[i] * gk.weights()[i];
         const double lhs = dot(conv_block(k, x, s), g);
         return within(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0), 1e-12,
                       "|<K x, g> - <K, adj(g, x)>|");
       }},
  };
}

std::vector<Check> resample_checks(std::uint64_t seed) {
  return {
      {"round_trip",
       [seed] {
         Rng rng(seed + 4);
         double worst = 0.0;
         for (int k = 0; k < 100; ++k) {
           const std::size_t d = 1 + static_cast<std::size_t>(k % 3);
           const std::size_t sv = k % 2 == 0 ? 2 : 3;
           const std::size_t c = 1 + rng.below(2);
           const ResampleOp op = make_resample(StrideSpec::uniform(d, sv), c, k % 4 < 2,
                                               ResampleMode::kDown, rng, 0.2);
           const Tensor x = random_tensor(c, std::vector<std::size_t>(d, sv * 2), rng);
           worst = worst_of(worst, relative_error(up_forward(op, down_forward(op, x)), x));
         }
         return within(worst, 1e-11, "max relative error");
       }},
      {"theta_gradient_vs_central_difference",
       [seed] {
         Rng rng(seed + 5);
         ResampleOp op = make_resample(StrideSpec{2, 2}, 2, false, ResampleMode::kDown, rng, 1.0);
         const Tensor x = random_tensor(2, {4, 4}, rng);
         const Tensor g = random_tensor(8, {2, 2}, rng);
         const auto grads = grad_theta(op, x, g);
         double worst = 0.0;
         for (std::size_t c = 0; c < op.thetas.size(); ++c) {
           const auto fd =
               central_diff(op.thetas[c].data(), [&] { return dot(down_forward(op, x), g); });
           worst = worst_of(worst, rel(grads[c].data(), fd));
         }
         return within(worst, 1e-5, "relative error");
       }},
  };
}

CouplingLayer test_coupling(CouplingKind kind, Rng& rng) {
  CouplingSpec spec;
  spec.kind = kind;
  spec.channels = 4;
  spec.dim = 2;
  CouplingLayer layer = make_coupling(spec, 1, rng);
  std::vector<ParamSlot> slots;
  collect_params(layer.subnet, "", slots);
  perturb(slots, rng);
  return layer;
}

std::vector<Check> layer_checks(std::uint64_t seed) {
  return {
      {"coupling_round_trip",
       [seed] {
         Rng rng(seed + 6);
         double worst = 0.0;
         for (CouplingKind kind : {CouplingKind::kAdditive, CouplingKind::kAffine}) {
           const CouplingLayer layer = test_coupling(kind, rng);
           const Tensor x = random_tensor(4, {4, 4}, rng);
           worst = worst_of(
               worst, relative_error(coupling_inverse(layer, coupling_forward(layer, x).y), x));
         }
         return within(worst, 1e-12, "max relative error");
       }},
      {"affine_logdet_vs_jacobian",
       [seed] {
         Rng rng(seed + 7);
         const CouplingLayer layer = test_coupling(CouplingKind::kAffine, rng);
         const Tensor x = random_tensor(4, {2, 2}, rng);
         const double ref =
             fd_logdet([&](const Tensor& t) { return coupling_forward(layer, t).y; }, x);
         return within(std::abs(coupling_forward(layer, x).logdet - ref), 1e-4,
                       "|logdet - log|det J||");
       }},
      {"coupling_backward_vs_central_difference",
       [seed] {
         Rng rng(seed + 8);
         CouplingLayer layer = test_coupling(CouplingKind::kAffine, rng);
         Tensor x = random_tensor(4, {3, 3}, rng);
         const Tensor r = random_tensor(4, {3, 3}, rng);
         const double w = 0.7;
         auto loss = [&] {
           const CouplingOutput o = coupling_forward(layer, x);
           return dot(o.y, r) + w * o.logdet;
         };
         CouplingGrads grads = coupling_backward(layer, coupling_forward(layer, x).y, r, x, w);
         std::vector<ParamSlot> slots, gslots;
         collect_params(layer.subnet, "", slots);
         collect_params(grads.grad, "", gslots);
         std::vector<double> analytic, fd;
         for (std::size_t k = 0; k < slots.size(); ++k) {
           analytic.insert(analytic.end(), gslots[k].data.begin(), gslots[k].data.end());
           const auto part = central_diff(slots[k].data, loss);
           fd.insert(fd.end(), part.begin(), part.end());
         }
         const auto fdx = central_diff(x.data(), loss);
         return both(within(rel(analytic, fd), 1e-5, "parameter relative error"),
                     within(rel(grads.grad_x.data(), fdx), 1e-5, "input relative error"));
       }},
  };
}

IUNet perturbed_net(const IUNetConfig& cfg, Rng& rng) {
  IUNet net = build(cfg, rng.next_u64());
  perturb(params(net), rng);
  return net;
}

std::vector<Check> iunet_checks(std::uint64_t seed) {
  return {
      {"identity_at_init",
       [seed] {
         Rng rng(seed + 9);
         double worst = 0.0, worst_logdet = 0.0;
         for (std::size_t m = 1; m <= 4; ++m) {
           IUNetConfig cfg = IUNetConfig::uniform(2, m, 4, 2, Fraction{1, 2}, 2, {16, 16});
           cfg.coupling = CouplingKind::kAffine;
           const IUNet net = build(cfg, seed + m);
           const Tensor x = random_tensor(4, {16, 16}, rng);
           const ForwardResult out = forward(net, x);
           // A few ulps of the largest entry, from the orthogonal round trips.
           worst = worst_of(worst, max_abs_diff(out.y, x) / std::max(1.0, max_abs(x)));
           worst_logdet = worst_of(worst_logdet, std::abs(out.logdet));
         }
         return both(within(worst, 1e-15, "max |f(x) - x| / max(1, max |x|)"),
                     within(worst_logdet, 0.0, "max |logdet|"));
       }},
      {"inverse_round_trip",
       [seed] {
         Rng rng(seed + 10);
         double worst = 0.0;
         for (std::size_t m = 2; m <= 4; ++m) {
           for (CouplingKind kind : {CouplingKind::kAdditive, CouplingKind::kAffine}) {
             IUNetConfig cfg = IUNetConfig::uniform(2, m, 2, 2, Fraction{1, 2}, 2, {16, 16});
             cfg.coupling = kind;
             const IUNet net = perturbed_net(cfg, rng);
             const Tensor x = random_tensor(2, {16, 16}, rng);
             worst = worst_of(worst, relative_error(inverse(net, forward(net, x).y), x));
           }
         }
         return within(worst, 1e-8, "max relative error");
       }},
      {"engine_equivalence",
       [seed] {
         Rng rng(seed + 11);
         double worst = 0.0;
         for (int k = 0; k < 6; ++k) {
           IUNetConfig cfg = IUNetConfig::uniform(1 + k % 2, 1 + k % 3, 2, 2, Fraction{1, 2},
                                                  1 + k % 2, {});
           cfg.input_spatial.assign(cfg.dim, 8);
           cfg.coupling = k % 2 == 0 ? CouplingKind::kAffine : CouplingKind::kAdditive;
           cfg.downsample_before_split = k >= 3;
           const IUNet net = perturbed_net(cfg, rng);
           const Tensor x = random_tensor(2, cfg.input_spatial, rng);
           const Tensor r = random_tensor(2, cfg.input_spatial, rng);
           Tape tape;
           forward(net, x, &tape);
           const auto conv = flatten(backward_conventional(net, &tape, r, 0.5).grads);
           const auto me = flatten(backward_memeff(net, x, r, 0.5).grads);
           worst = worst_of(worst, rel(me, conv));
         }
         return within(worst, 1e-9, "max relative difference");
       }},
      {"conventional_backward_vs_central_difference",
       [seed] {
         Rng rng(seed + 12);
         IUNetConfig cfg = IUNetConfig::uniform(1, 2, 2, 2, Fraction{1, 2}, 1, {8});
         cfg.coupling = CouplingKind::kAffine;
         IUNet net = perturbed_net(cfg, rng);
         const Tensor x = random_tensor(2, {8}, rng);
         const Tensor r = random_tensor(2, {8}, rng);
         const double w = 0.5;
         Tape tape;
         forward(net, x, &tape);
         const auto analytic = flatten(backward_conventional(net, &tape, r, w).grads);
         std::vector<double> fd;
         for (auto& slot : params(net)) {
           const auto part = central_diff(slot.data, [&] {
             const ForwardResult o = forward(net, x);
             return dot(o.y, r) + w * o.logdet;
           });
           fd.insert(fd.end(), part.begin(), part.end());
         }
         return within(rel(analytic, fd), 1e-5,
                       "relative error over " + std::to_string(fd.size()) + " parameters");
       }},
  };
}

std::vector<Check> flow_checks(std::uint64_t seed) {
  return {
      {"affine_logdet_vs_jacobian",
       [seed] {
         Rng rng(seed + 13);
         double worst = 0.0;
         for (std::size_t m = 1; m <= 2; ++m) {
           IUNetConfig cfg = IUNetConfig::uniform(2, m, 2, 2, Fraction{1, 2}, 2, {2, 4});
           cfg.coupling = CouplingKind::kAffine;
           FlowModel model = make_flow(cfg, rng.next_u64());
           perturb(params(model.net), rng);
           const Tensor x = random_tensor(2, {2, 4}, rng);
           worst = worst_of(worst,
                            std::abs(flow_forward(model, x).logdet - jacobian_logdet(model, x)));
         }
         return within(worst, 1e-4, "max |logdet - log|det J||");
       }},
      {"additive_logdet_is_zero",
       [seed] {
         Rng rng(seed + 14);
         IUNetConfig cfg = IUNetConfig::uniform(2, 2, 2, 2, Fraction{1, 2}, 2, {4, 4});
         FlowModel model = make_flow(cfg, rng.next_u64());
         perturb(params(model.net), rng);
         const double ld = flow_forward(model, random_tensor(2, {4, 4}, rng)).logdet;
         return Outcome{ld == 0.0, "logdet = " + sci(ld)};
       }},
  };
}

std::vector<Check> data_checks(std::uint64_t seed) {
  return {
      {"psnr_closed_form",
       [] {
         const Tensor a(1, {8, 8}, 0.0);
         const Tensor b(1, {8, 8}, 0.1);
         return within(std::abs(psnr(a, b).db - 20.0), 1e-10, "|PSNR - 20 dB|");
       }},
      {"phantom_determinism",
       [seed] {
         const auto a = gen_foam2d(seed, 32, 5);
         const auto b = gen_foam2d(seed, 32, 5);
         return Outcome{a.image == b.image, "two draws from one seed"};
       }},
  };
}

}  // namespace

std::vector<std::string> verify_groups() {
  return {"linalg", "orthogonality", "tensor", "resample", "layers", "iunet", "flow", "data"};
}

std::vector<CheckResult> cmd_verify(const VerifyOptions& opts, std::ostream& out) {
  const auto groups = verify_groups();
  if (!opts.group.empty() &&
      std::find(groups.begin(), groups.end(), opts.group) == groups.end()) {
    throw ConfigError("unknown verify group \"" + opts.group + "\"");
  }
  std::vector<CheckResult> results;
  for (const std::string& group : groups) {
    if (!opts.group.empty() && group != opts.group) continue;
    std::vector<Check> checks;
    if (group == "linalg") checks = linalg_checks(opts.seed);
    if (group == "orthogonality") checks = orthogonality_checks(opts);
    if (group == "tensor") checks = tensor_checks(opts.seed);
    if (group == "resample") checks = resample_checks(opts.seed);
    if (group == "layers") checks = layer_checks(opts.seed);
    if (group == "iunet") checks = iunet_checks(opts.seed);
    if (group == "flow") checks = flow_checks(opts.seed);
    if (group == "data") checks = data_checks(opts.seed);
    for (const Check& check : checks) {
      CheckResult r{group, check.name, false, ""};
      try {
        const Outcome o = check.run();
        r.passed = o.passed;
        r.detail = o.detail;
      } catch (const std::exception& e) {
        r.detail = std::string("threw: ") + e.what();
      }
      out << (r.passed ? "PASS " : "FAIL ") << group << "/" << check.name << ": " << r.detail
          << "\n";
      results.push_back(std::move(r));
    }
  }
  return results;
}

}  // namespace iunet::cli
