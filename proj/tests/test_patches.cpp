#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "semcom/ops.hpp"
#include "semcom/patches.hpp"
#include "semcom/rng.hpp"

using namespace semcom;

TEST_CASE("patchify: toy geometry") {
  Rng rng(1);
  Tensor img = Tensor::rand_uniform({3, 32, 32}, rng, 0, 1);
  PatchGrid grid = patchify(img, 8);
  CHECK(grid.rows == 4);
  CHECK(grid.cols == 4);
  CHECK(grid.count() == 16);
  CHECK(grid.patches.shape() == Shape{16, 3, 8, 8});
}

TEST_CASE("patchify: 480x320 frame at p=8 gives 2400 patches") {
  Tensor img = Tensor::zeros({3, 320, 480});
  PatchGrid grid = patchify(img, 8);
  CHECK(grid.count() == 2400);
  CHECK(grid.rows == 40);
  CHECK(grid.cols == 60);
}

TEST_CASE("patchify then reassemble is the identity, bit-exact") {
  Rng rng(2);
  Tensor img = Tensor::rand_uniform({3, 24, 16}, rng, 0, 1);
  Tensor back = reassemble(patchify(img, 8));
  auto a = img.data();
  auto b = back.data();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(&a[i], &b[i], 4) == 0);
  }
}

TEST_CASE("patchify rejects non-divisible extents") {
  Tensor img = Tensor::zeros({3, 30, 32});
  CHECK_THROWS_AS(patchify(img, 8), std::invalid_argument);
}

TEST_CASE("patch content and flatten order are channel-major") {
  // Give every pixel of patch (1,2) a unique value and check both where the
  // patch lands and how project flattens it.
  const size_t p = 4, h = 8, w = 16;
  Tensor img = Tensor::zeros({3, h, w});
  for (size_t c = 0; c < 3; ++c) {
    for (size_t y = 0; y < p; ++y) {
      for (size_t x = 0; x < p; ++x) {
        img.set({c, 4 + y, 8 + x},
                static_cast<float>(c * 100 + y * 10 + x));
      }
    }
  }
  PatchGrid grid = patchify(img, p);
  const size_t idx = grid_to_index(1, 2, grid.cols);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t y = 0; y < p; ++y) {
      for (size_t x = 0; x < p; ++x) {
        CHECK(grid.patches.at({idx, c, y, x}) ==
              static_cast<float>(c * 100 + y * 10 + x));
      }
    }
  }

  // Identity projection exposes the flatten order directly: column idx+1 of
  // the token matrix must equal the channel-major flattening.
  Rng rng(3);
  ProjectorParams params(3 * p * p, p, grid.count(), rng);
  for (float& v : params.w_proj.tensor.mutable_data()) v = 0.0f;
  for (size_t d = 0; d < 3 * p * p; ++d) params.w_proj.tensor.set({d, d}, 1.0f);
  for (float& v : params.b.tensor.mutable_data()) v = 0.0f;
  for (float& v : params.pos_embed.tensor.mutable_data()) v = 0.0f;
  TokenMatrix tokens = project(grid, params);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t y = 0; y < p; ++y) {
      for (size_t x = 0; x < p; ++x) {
        const size_t flat = c * p * p + y * p + x;
        CHECK(tokens.at({flat, idx + 1}) ==
              static_cast<float>(c * 100 + y * 10 + x));
      }
    }
  }
}

TEST_CASE("index mapping is a row-major bijection") {
  CHECK(index_to_grid(5, 4) == std::pair<size_t, size_t>{1, 1});
  CHECK(grid_to_index(0, 0, 4) == 0);
  for (size_t i = 0; i < 16; ++i) {
    auto [r, c] = index_to_grid(i, 4);
    CHECK(grid_to_index(r, c, 4) == i);
  }
  CHECK_THROWS_AS(grid_to_index(0, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(index_to_grid(0, 0), std::invalid_argument);
}

TEST_CASE("project: zero image maps to additive terms only") {
  Rng rng(4);
  PatchGrid grid = patchify(Tensor::zeros({3, 16, 16}), 8);
  ProjectorParams params(8, 8, grid.count(), rng);
  for (float& v : params.b.tensor.mutable_data()) v = 0.0f;
  for (float& v : params.pos_embed.tensor.mutable_data()) v = 0.0f;
  TokenMatrix tokens = project(grid, params);
  REQUIRE(tokens.shape() == Shape{8, 5});
  for (size_t d = 0; d < 8; ++d) {
    CHECK(tokens.at({d, 0}) == params.cls_token.tensor[d]);
    for (size_t i = 1; i < 5; ++i) CHECK(tokens.at({d, i}) == 0.0f);
  }
}

TEST_CASE("project: zero weights with unit bias give all-ones patch columns") {
  Rng rng(5);
  Tensor img = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
  PatchGrid grid = patchify(img, 8);
  ProjectorParams params(8, 8, grid.count(), rng);
  for (float& v : params.w_proj.tensor.mutable_data()) v = 0.0f;
  for (float& v : params.b.tensor.mutable_data()) v = 1.0f;
  for (float& v : params.pos_embed.tensor.mutable_data()) v = 0.0f;
  TokenMatrix tokens = project(grid, params);
  for (size_t d = 0; d < 8; ++d) {
    for (size_t i = 1; i < 5; ++i) CHECK(tokens.at({d, i}) == 1.0f);
  }
}

TEST_CASE("project matches a dense multiply oracle on one patch") {
  Rng rng(6);
  Tensor img = Tensor::rand_uniform({3, 8, 8}, rng, 0, 1);
  PatchGrid grid = patchify(img, 8);
  const size_t d = 6, flat = 3 * 64;
  ProjectorParams params(d, 8, 1, rng);
  TokenMatrix tokens = project(grid, params);

  for (size_t row = 0; row < d; ++row) {
    double acc = params.b.tensor[row];
    for (size_t k = 0; k < flat; ++k) {
      acc += static_cast<double>(params.w_proj.tensor.at({row, k})) *
             grid.patches[k];
    }
    acc += params.pos_embed.tensor.at({row, 1});
    CHECK(tokens.at({row, 1}) == doctest::Approx(acc).epsilon(1e-6));
  }
}

TEST_CASE("project is linear in pixels up to the shared additive terms") {
  Rng rng(7);
  const float a = 0.6f, b = -0.3f;
  Tensor x1 = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
  Tensor x2 = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
  std::vector<float> mix(x1.size());
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = a * x1[i] + b * x2[i];
  Tensor xm = Tensor::from_data({3, 16, 16}, std::move(mix));

  ProjectorParams params(8, 8, 4, rng);
  Tensor base = project(patchify(Tensor::zeros({3, 16, 16}), 8), params);
  Tensor t1 = project(patchify(x1, 8), params);
  Tensor t2 = project(patchify(x2, 8), params);
  Tensor tm = project(patchify(xm, 8), params);
  for (size_t i = 0; i < tm.size(); ++i) {
    const double expected =
        a * (t1[i] - base[i]) + b * (t2[i] - base[i]) + base[i];
    CHECK(tm[i] == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("project gradients flow into all projector parameters") {
  Rng rng(8);
  Tensor img = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
  PatchGrid grid = patchify(img, 8);
  ProjectorParams params(8, 8, grid.count(), rng);
  Tensor loss = sum(project(grid, params));
  loss.backward();
  for (Parameter* p : params.parameters()) {
    CHECK(p->tensor.has_grad());
  }
}
