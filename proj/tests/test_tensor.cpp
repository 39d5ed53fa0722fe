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

#include "iunet/conv.hpp"
#include "iunet/error.hpp"
#include "iunet/linalg.hpp"
#include "iunet/tensor_io.hpp"
#include "support/oracles.hpp"

using namespace iunet;
using iunet::testing::fd_gradient;
using iunet::testing::random_matrix;
using iunet::testing::random_tensor;
using iunet::testing::rel_err;

namespace {

Matrix m_haar() {
  return Matrix{{1, 1, -1, -1}, {1, 1, 1, 1}, {1, -1, 1, -1}, {1, -1, -1, 1}} * 0.5;
}

Kernel random_orthogonal_kernel(const StrideSpec& s, Rng& rng) {
  const std::size_t n = s.sigma();
  return reorder_to_kernel(matrix_exp(skew(random_matrix(n, n, rng, 0.5))), s);
}

StrideSpec random_stride(std::size_t d, Rng& rng) {
  std::vector<std::size_t> s(d);
  std::size_t sigma = 1;
  while (sigma < 2) {
    sigma = 1;
    for (auto& v : s) {
      v = 1 + rng.below(3);
      sigma *= v;
    }
  }
  return StrideSpec(s);
}

std::vector<std::size_t> random_extent(const StrideSpec& s, Rng& rng, std::size_t max_blocks) {
  std::vector<std::size_t> n(s.dim());
  for (std::size_t a = 0; a < s.dim(); ++a) n[a] = s[a] * (1 + rng.below(max_blocks));
  return n;
}

}  // namespace

TEST_CASE("conv_block with the pixel-shuffle kernel selects patch entries") {
  const StrideSpec s{2, 2};
  const Tensor x(1, {2, 2}, std::vector<double>{1.5, -2.0, 3.0, 4.25});
  const Tensor y = conv_block(reorder_to_kernel(Matrix::identity(4), s), x, s);
  CHECK(y.shape() == std::vector<std::size_t>{4, 1, 1});
  for (std::size_t c = 0; c < 4; ++c) CHECK(y[c] == x[c]);
}

TEST_CASE("conv_block with the Haar kernel on a constant image") {
  const StrideSpec s{2, 2};
  const double c = 0.7;
  const Tensor x(1, {6, 4}, c);
  const Tensor y = conv_block(reorder_to_kernel(m_haar(), s), x, s);
  for (std::size_t ch = 0; ch < 4; ++ch) {
    for (double v : y.channel(ch)) CHECK(v == doctest::Approx(ch == 1 ? 2 * c : 0.0));
  }
}

TEST_CASE("conv_block equals the naive sliding-window convolution") {
  Rng rng(10);
  for (std::size_t d = 1; d <= 3; ++d) {
    for (int trial = 0; trial < 40; ++trial) {
      const StrideSpec s = random_stride(d, rng);
      const auto n = random_extent(s, rng, d == 3 ? 3 : 4);
      bool small = true;
      for (auto e : n) small = small && e <= 8;
      if (!small) continue;
      const Tensor x = random_tensor(1, n, rng);
      const Matrix a = random_matrix(s.sigma(), s.sigma(), rng);
      const Kernel k = reorder_to_kernel(a, s);
      const Tensor expect = iunet::testing::naive_strided_conv(k.weights(), s.sigma(), x, s.values());
      CHECK(max_abs_diff(conv_block(k, x, s), expect) <= 1e-12);
    }
  }
}

TEST_CASE("conv_block operator is block diagonal with copies of A") {
  Rng rng(11);
  const StrideSpec s{2, 3};
  const std::vector<std::size_t> n{4, 6};
  const Matrix a = random_matrix(6, 6, rng);
  const Kernel k = reorder_to_kernel(a, s);
  const std::size_t in_size = 24;
  // Column j of the operator matrix is conv_block applied to basis vector j.
  for (std::size_t j = 0; j < in_size; ++j) {
    Tensor e(1, n);
    e[j] = 1.0;
    const Tensor col = conv_block(k, e, s);
    const std::size_t r = j / n[1], c = j % n[1];
    const std::size_t block = (r / 2) * 2 + c / 3;
    const std::size_t offset = (r % 2) * 3 + c % 3;
    for (std::size_t ch = 0; ch < 6; ++ch) {
      for (std::size_t b = 0; b < 4; ++b) {
        const double expect = b == block ? a(ch, offset) : 0.0;
        CHECK(col[ch * 4 + b] == expect);
      }
    }
  }
}

TEST_CASE("conv_block and conv_block_transpose are adjoint") {
  Rng rng(12);
  for (std::size_t d = 1; d <= 3; ++d) {
    for (int trial = 0; trial < 100; ++trial) {
      const StrideSpec s = random_stride(d, rng);
      const auto n = random_extent(s, rng, 3);
      const Kernel k = reorder_to_kernel(random_matrix(s.sigma(), s.sigma(), rng), s);
      const Tensor x = random_tensor(1, n, rng);
      const Tensor y = random_tensor(s.sigma(), conv_block(k, x, s).spatial(), rng);
      const double lhs = dot(conv_block(k, x, s), y);
      const double rhs = dot(x, conv_block_transpose(k, y, s));
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, norm(x) * norm(y) * 10));
    }
  }
}

TEST_CASE("orthogonal kernels preserve norms and invert via the transpose") {
  Rng rng(13);
  for (std::size_t d = 1; d <= 3; ++d) {
    const StrideSpec s = StrideSpec::uniform(d, 2);
    const auto n = random_extent(s, rng, 3);
    const Kernel k = random_orthogonal_kernel(s, rng);
    const Tensor x = random_tensor(1, n, rng);
    const Tensor y = conv_block(k, x, s);
    CHECK(std::abs(norm(y) - norm(x)) <= 1e-12 * norm(x));
    CHECK(max_abs_diff(conv_block_transpose(k, y, s), x) <= 1e-12);
  }
}

TEST_CASE("pixel-shuffle transpose of constant channels tiles a checkerboard") {
  const StrideSpec s{2, 2};
  Tensor y(4, {3, 3});
  const double c[4] = {0.1, 0.4, 0.7, 1.0};
  for (std::size_t ch = 0; ch < 4; ++ch)
    for (double& v : y.channel(ch)) v = c[ch];
  const Tensor x = conv_block_transpose(reorder_to_kernel(Matrix::identity(4), s), y, s);
  REQUIRE(x.spatial() == std::vector<std::size_t>{6, 6});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t col = 0; col < 6; ++col) CHECK(x[r * 6 + col] == c[(r % 2) * 2 + col % 2]);
}

TEST_CASE("conv_kernel_adjoint") {
  Rng rng(14);
  const StrideSpec s{2, 2};
  const Tensor x = random_tensor(1, {4, 6}, rng);
  const Tensor zero(4, {2, 3});
  const Kernel k0 = conv_kernel_adjoint(zero, x, s);
  for (double v : k0.weights()) CHECK(v == 0.0);

  SUBCASE("one-hot gradient picks out the image patch") {
    Tensor g(4, {2, 3});
    const std::size_t ch = 2, block = 4;  // block (1, 1)
    g[ch * 6 + block] = 1.0;
    const Kernel k = conv_kernel_adjoint(g, x, s);
    for (std::size_t f = 0; f < 4; ++f) {
      auto filt = k.filter(f);
      for (std::size_t j = 0; j < 4; ++j) {
        const double patch = x[(2 + j / 2) * 6 + 2 + j % 2];
        CHECK(filt[j] == (f == ch ? patch : 0.0));
      }
    }
  }

  SUBCASE("matches finite differences of <conv_block(K, x), g>") {
    const Tensor g = random_tensor(4, {2, 3}, rng);
    Matrix a = random_matrix(4, 4, rng);
    auto loss = [&] { return dot(conv_block(reorder_to_kernel(a, s), x, s), g); };
    const auto fd = fd_gradient(a.data(), loss, 1e-6);
    const Kernel an = conv_kernel_adjoint(g, x, s);
    CHECK(rel_err(an.weights(), fd) <= 1e-6);
  }

  CHECK_THROWS_AS(conv_kernel_adjoint(Tensor(4, {3, 3}), x, s), ShapeError);
}

TEST_CASE("conv_block shape errors") {
  const StrideSpec s{2, 2};
  const Kernel k = reorder_to_kernel(Matrix::identity(4), s);
  CHECK_THROWS_AS(conv_block(k, Tensor(1, {3, 4}), s), ShapeError);
  CHECK_THROWS_AS(conv_block(k, Tensor(2, {4, 4}), s), ShapeError);
  CHECK_THROWS_AS(conv_block_transpose(k, Tensor(3, {2, 2}), s), ShapeError);
  CHECK_THROWS_AS(conv_block(k, Tensor(1, {4, 4, 4}), s), ShapeError);
}

TEST_CASE("same_conv3 forward") {
  Rng rng(15);
  const Tensor x = random_tensor(3, {5, 4}, rng);
  CHECK(same_conv3(Conv3Weights::centered_identity(3, 3, 2), x) == x);
  CHECK(max_abs(same_conv3(Conv3Weights(2, 3, 2), x)) == 0.0);
  for (std::size_t d = 1; d <= 3; ++d) {
    std::vector<std::size_t> n(d, 4);
    n[0] = 3;
    const Tensor xi = random_tensor(2, n, rng);
    Conv3Weights w(3, 2, d);
    for (double& v : w.w) v = rng.normal();
    const Tensor expect = iunet::testing::naive_same_conv3(w.w, 3, 2, xi);
    CHECK(max_abs_diff(same_conv3(w, xi), expect) <= 1e-12);
  }
  CHECK_THROWS_AS(same_conv3(Conv3Weights(2, 2, 2), x), ShapeError);
}

TEST_CASE("same_conv3 backward matches finite differences") {
  Rng rng(16);
  Tensor x = random_tensor(2, {4, 4}, rng);
  Conv3Weights w(3, 2, 2);
  for (double& v : w.w) v = rng.normal();
  const Tensor g = random_tensor(3, {4, 4}, rng);
  auto loss = [&] { return dot(same_conv3(w, x), g); };
  const Conv3Grads an = same_conv3_backward(w, x, g);
  CHECK(rel_err(an.grad_w, fd_gradient(w.w, loss)) <= 1e-6);
  CHECK(rel_err(an.grad_x.data(), fd_gradient(x.data(), loss)) <= 1e-6);
}

TEST_CASE("tensor file round trip and corruption") {
  Rng rng(17);
  const auto dir = std::filesystem::temp_directory_path() / "iunet_tensor_io";
  std::filesystem::create_directories(dir);
  const auto path = dir / "t.f64";
  const Tensor t = random_tensor(3, {2, 5}, rng);
  save_tensor(path, t);
  CHECK(load_tensor(path) == t);
  CHECK(std::filesystem::file_size(path) == t.bytes());
  std::filesystem::resize_file(path, t.bytes() - 3);
  CHECK_THROWS_AS(load_tensor(path), CorruptFileError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("tensor channel helpers") {
  Rng rng(18);
  const Tensor x = random_tensor(5, {3}, rng);
  const Tensor a = slice_channels(x, 0, 2);
  const Tensor b = slice_channels(x, 2, 3);
  CHECK(concat_channels(a, b) == x);
  CHECK_THROWS_AS(slice_channels(x, 4, 2), ShapeError);
  CHECK_THROWS_AS(Tensor(1, {0, 2}), ShapeError);
  BatchTensor batch{{x, 3.0 * x}};
  CHECK(max_abs_diff(batch_mean(batch), 2.0 * x) < 1e-15);
}
