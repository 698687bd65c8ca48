#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semcom/masker.hpp"
#include "semcom/patches.hpp"
#include "semcom/rng.hpp"
#include "semcom/tensor.hpp"

using namespace semcom;

namespace {

// Synthetic (H, P+1, P+1) stack whose head rows are given explicitly.
Tensor attention_stack(const std::vector<std::vector<float>>& cls_rows,
                       size_t n) {
  const size_t heads = cls_rows.size();
  std::vector<float> data(heads * n * n, 0.0f);
  for (size_t h = 0; h < heads; ++h) {
    REQUIRE(cls_rows[h].size() == n);
    for (size_t j = 0; j < n; ++j) data[h * n * n + j] = cls_rows[h][j];
  }
  return Tensor::from_data({heads, n, n}, std::move(data));
}

ClsAttentionGrid grid_from_scores(std::vector<float> scores, size_t rows,
                                  size_t cols) {
  ClsAttentionGrid grid;
  grid.scores = Tensor::from_data({rows, cols}, std::move(scores));
  return grid;
}

// Brute-force oracle: indices sorted by (-score, index), first k.
std::vector<size_t> top_k_oracle(const std::vector<float>& scores, size_t k) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

TEST_CASE("extract_cls_attention: uniform single head") {
  const size_t n = 17;  // P = 16
  std::vector<float> row(n, 1.0f / n);
  Tensor stack = attention_stack({row}, n);
  ClsAttentionGrid grid = extract_cls_attention(stack, 4, 4);
  for (size_t i = 0; i < 16; ++i) {
    CHECK(grid.scores[i] == doctest::Approx(1.0 / n).epsilon(1e-6));
  }
  CHECK(grid.head_averaged);
}

TEST_CASE("extract_cls_attention: head averaging is the arithmetic mean") {
  const size_t n = 5;  // P = 4
  std::vector<float> g = {0.9f, 0.1f, 0.2f, 0.3f, 0.4f};
  std::vector<float> g3(n);
  for (size_t i = 0; i < n; ++i) g3[i] = 3.0f * g[i];
  Tensor stack = attention_stack({g, g3}, n);
  ClsAttentionGrid grid = extract_cls_attention(stack, 2, 2);
  for (size_t i = 0; i < 4; ++i) {
    // Column 0 of the row (CLS self-score) is dropped.
    CHECK(grid.scores[i] == doctest::Approx(2.0 * g[i + 1]).epsilon(1e-6));
  }
}

TEST_CASE("extract_cls_attention: 1D index 5 lands at grid cell (1,1)") {
  const size_t n = 17;
  std::vector<float> row(n, 0.0f);
  row[1 + 5] = 0.9f;  // patch with 1D index 5
  Tensor stack = attention_stack({row, row, row}, n);
  ClsAttentionGrid grid = extract_cls_attention(stack, 4, 4);
  CHECK(grid.scores.at({1, 1}) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(grid.scores.at({0, 0}) == 0.0f);
}

TEST_CASE("extract_cls_attention rejects bad shapes") {
  Tensor bad = Tensor::zeros({2, 5, 4});
  CHECK_THROWS_AS(extract_cls_attention(bad, 2, 2), std::invalid_argument);
  Tensor ok = Tensor::zeros({2, 5, 5});
  CHECK_THROWS_AS(extract_cls_attention(ok, 4, 4), std::invalid_argument);
}

TEST_CASE("build_mask: pure threshold selection picks the global top-k") {
  std::vector<float> scores(16, 0.01f);
  scores[0] = 0.5f;
  scores[1] = 0.3f;
  scores[2] = 0.1f;
  scores[3] = 0.1f;
  ClsAttentionGrid grid = grid_from_scores(scores, 4, 4);
  SelectionMask mask = build_mask(grid, 2, 1.0, 77);
  CHECK(mask.n_selected == 2);
  CHECK(mask.selected(0));
  CHECK(mask.selected(1));
  CHECK(mask.lambda == doctest::Approx(0.3));
  for (size_t i = 2; i < 16; ++i) CHECK_FALSE(mask.selected(i));
}

TEST_CASE("build_mask: alpha 0.5 takes two by threshold, two at random") {
  Rng rng(5);
  std::vector<float> scores(16);
  for (float& v : scores) v = static_cast<float>(rng.uniform());
  ClsAttentionGrid grid = grid_from_scores(scores, 4, 4);
  SelectionMask mask = build_mask(grid, 4, 0.5, 123);
  CHECK(mask.n_selected == 4);
  // The two threshold picks are the brute-force top 2.
  auto top2 = top_k_oracle(scores, 2);
  for (size_t i : top2) CHECK(mask.selected(i));
}

TEST_CASE("build_mask: full budget selects everything") {
  Rng rng(6);
  std::vector<float> scores(16);
  for (float& v : scores) v = static_cast<float>(rng.uniform());
  ClsAttentionGrid grid = grid_from_scores(scores, 4, 4);
  for (double alpha : {1.0, 0.85, 0.0}) {
    SelectionMask mask = build_mask(grid, 16, alpha, 9);
    CHECK(mask.n_selected == 16);
    for (size_t i = 0; i < 16; ++i) CHECK(mask.selected(i));
  }
}

TEST_CASE("build_mask: argument errors") {
  ClsAttentionGrid grid = grid_from_scores(std::vector<float>(16, 0.1f), 4, 4);
  CHECK_THROWS_AS(build_mask(grid, 17, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_mask(grid, 4, 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_mask(grid, 4, -0.1, 1), std::invalid_argument);
}

TEST_CASE("build_mask is deterministic in all arguments") {
  Rng rng(7);
  std::vector<float> scores(16);
  for (float& v : scores) v = static_cast<float>(rng.uniform());
  ClsAttentionGrid grid = grid_from_scores(scores, 4, 4);
  SelectionMask a = build_mask(grid, 6, 0.5, 99);
  SelectionMask b = build_mask(grid, 6, 0.5, 99);
  CHECK(a.flat == b.flat);
  SelectionMask c = build_mask(grid, 6, 0.5, 100);
  CHECK(a.flat.size() == c.flat.size());  // different seed may differ in fill
}

TEST_CASE("threshold stage dominates every unselected patch") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(11, seed));
    std::vector<float> scores(16);
    for (float& v : scores) v = static_cast<float>(rng.uniform());
    ClsAttentionGrid grid = grid_from_scores(scores, 4, 4);
    SelectionMask mask = build_mask(grid, 5, 1.0, seed);
    float min_sel = 1e9f, max_unsel = -1e9f;
    for (size_t i = 0; i < 16; ++i) {
      if (mask.selected(i)) {
        min_sel = std::min(min_sel, scores[i]);
      } else {
        max_unsel = std::max(max_unsel, scores[i]);
      }
    }
    CHECK(min_sel >= max_unsel);
  }
}

TEST_CASE("selection is invariant to positive scaling of the scores") {
  Rng rng(13);
  std::vector<float> scores(16);
  for (float& v : scores) v = static_cast<float>(rng.uniform());
  std::vector<float> scaled(16);
  for (size_t i = 0; i < 16; ++i) scaled[i] = 42.0f * scores[i];
  SelectionMask a = build_mask(grid_from_scores(scores, 4, 4), 6, 1.0, 1);
  SelectionMask b = build_mask(grid_from_scores(scaled, 4, 4), 6, 1.0, 1);
  CHECK(a.flat == b.flat);
}

TEST_CASE("ties break toward the lower 1D index") {
  std::vector<float> scores(16, 0.25f);
  SelectionMask mask = build_mask(grid_from_scores(scores, 4, 4), 3, 1.0, 1);
  CHECK(mask.selected(0));
  CHECK(mask.selected(1));
  CHECK(mask.selected(2));
  CHECK(mask.n_selected == 3);
}

TEST_CASE("build_mask matches the oracle on random grids with ties") {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(17, seed));
    std::vector<float> scores(16);
    for (float& v : scores) {
      // Half the grids are quantized to force duplicate scores.
      v = static_cast<float>(seed % 2 == 0
                                 ? rng.uniform()
                                 : std::floor(rng.uniform() * 4.0) / 4.0);
    }
    const size_t budget = rng.uniform_index(17);
    const double alpha = 1.0;
    SelectionMask mask =
        build_mask(grid_from_scores(scores, 4, 4), budget, alpha, seed);
    auto expected = top_k_oracle(scores, budget);
    std::vector<size_t> got;
    for (size_t i = 0; i < 16; ++i) {
      if (mask.selected(i)) got.push_back(i);
    }
    CHECK(got == expected);
  }
}

TEST_CASE("expand_mask places p x p blocks of ones") {
  SelectionMask mask;
  mask.rows = 4;
  mask.cols = 4;
  mask.flat.assign(16, 0);
  mask.flat[0] = 1;  // cell (0,0)
  mask.n_selected = 1;
  Tensor px = expand_mask(mask, 8);
  REQUIRE(px.shape() == Shape{32, 32});
  double total = 0.0;
  for (size_t y = 0; y < 32; ++y) {
    for (size_t x = 0; x < 32; ++x) {
      const float v = px.at({y, x});
      total += v;
      if (y < 8 && x < 8) {
        CHECK(v == 1.0f);
      } else {
        CHECK(v == 0.0f);
      }
    }
  }
  CHECK(total == doctest::Approx(64.0));

  Tensor all = expand_mask(all_ones_mask(4, 4), 8);
  for (float v : all.data()) CHECK(v == 1.0f);

  mask.flat.assign(16, 0);
  mask.n_selected = 0;
  Tensor none = expand_mask(mask, 8);
  for (float v : none.data()) CHECK(v == 0.0f);
}

TEST_CASE("per-patch restriction of the pixel mask is all-or-nothing") {
  Rng rng(19);
  std::vector<float> scores(16);
  for (float& v : scores) v = static_cast<float>(rng.uniform());
  SelectionMask mask = build_mask(grid_from_scores(scores, 4, 4), 7, 0.5, 3);
  Tensor px = expand_mask(mask, 8);
  for (size_t i = 0; i < 16; ++i) {
    const auto [gy, gx] = index_to_grid(i, 4);
    for (size_t y = 0; y < 8; ++y) {
      for (size_t x = 0; x < 8; ++x) {
        CHECK(px.at({gy * 8 + y, gx * 8 + x}) ==
              (mask.selected(i) ? 1.0f : 0.0f));
      }
    }
  }
}

TEST_CASE("bitmap serialization is LSB-first and round-trips") {
  SelectionMask mask;
  mask.rows = 4;
  mask.cols = 4;
  mask.flat.assign(16, 0);
  mask.flat[0] = 1;
  mask.flat[3] = 1;
  mask.flat[9] = 1;
  mask.n_selected = 3;
  auto bitmap = mask.to_bitmap();
  REQUIRE(bitmap.size() == 2);
  CHECK(bitmap[0] == 0x09);  // bits 0 and 3
  CHECK(bitmap[1] == 0x02);  // bit 9 -> bit 1 of byte 1
  SelectionMask back = SelectionMask::from_bitmap(bitmap, 4, 4);
  CHECK(back.flat == mask.flat);
  CHECK(back.n_selected == 3);

  // Trailing bits past P must be rejected.
  std::vector<uint8_t> bad = {0x01, 0x00};
  SelectionMask m5 = SelectionMask::from_bitmap({0x01}, 1, 5);
  CHECK(m5.n_selected == 1);
  CHECK_THROWS_AS(SelectionMask::from_bitmap({0xFF}, 1, 5),
                  std::invalid_argument);
}
