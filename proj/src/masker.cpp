#include "semcom/masker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "semcom/patches.hpp"
#include "semcom/rng.hpp"

namespace semcom {

ClsAttentionGrid extract_cls_attention(const Tensor& attention, size_t rows,
                                       size_t cols) {
  if (attention.rank() != 3 || attention.extent(1) != attention.extent(2)) {
    throw std::invalid_argument("extract_cls_attention: expected (H,P+1,P+1)");
  }
  const size_t heads = attention.extent(0);
  const size_t n = attention.extent(1);
  const size_t p = rows * cols;
  if (n != p + 1) {
    throw std::invalid_argument(
        "extract_cls_attention: grid " + std::to_string(rows) + "x" +
        std::to_string(cols) + " does not match P+1=" + std::to_string(n));
  }
  std::vector<float> grid(p, 0.0f);
  auto src = attention.data();
  for (size_t h = 0; h < heads; ++h) {
    // Row 0 of head h, skipping the CLS self-score at column 0.
    const size_t base = h * n * n;
    for (size_t i = 0; i < p; ++i) {
      grid[i] += src[base + 1 + i];
    }
  }
  const float inv = 1.0f / static_cast<float>(heads);
  for (float& v : grid) v *= inv;
  ClsAttentionGrid out;
  out.scores = Tensor::from_data({rows, cols}, std::move(grid));
  out.head_averaged = true;
  return out;
}

bool SelectionMask::selected_at(size_t row, size_t col) const {
  return selected(grid_to_index(row, col, cols));
}

std::vector<uint8_t> SelectionMask::to_bitmap() const {
  std::vector<uint8_t> out((flat.size() + 7) / 8, 0);
  for (size_t i = 0; i < flat.size(); ++i) {
    if (flat[i]) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  }
  return out;
}

SelectionMask SelectionMask::from_bitmap(const std::vector<uint8_t>& bitmap,
                                         size_t rows, size_t cols) {
  const size_t p = rows * cols;
  if (bitmap.size() != (p + 7) / 8) {
    throw std::invalid_argument("selection mask: bitmap length mismatch");
  }
  SelectionMask mask;
  mask.rows = rows;
  mask.cols = cols;
  mask.flat.assign(p, 0);
  for (size_t i = 0; i < p; ++i) {
    if (bitmap[i / 8] & (1u << (i % 8))) {
      mask.flat[i] = 1;
      ++mask.n_selected;
    }
  }
  // Bits past P must be clear.
  for (size_t i = p; i < bitmap.size() * 8; ++i) {
    if (bitmap[i / 8] & (1u << (i % 8))) {
      throw std::invalid_argument("selection mask: trailing bits set");
    }
  }
  mask.lambda = std::numeric_limits<double>::quiet_NaN();
  return mask;
}

SelectionMask all_ones_mask(size_t rows, size_t cols) {
  SelectionMask mask;
  mask.rows = rows;
  mask.cols = cols;
  mask.flat.assign(rows * cols, 1);
  mask.n_selected = rows * cols;
  mask.lambda = -std::numeric_limits<double>::infinity();
  return mask;
}

SelectionMask build_mask(const ClsAttentionGrid& grid, size_t n_budget,
                         double alpha, uint64_t rng_seed) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("build_mask: alpha outside [0,1]");
  }
  const size_t p = grid.rows() * grid.cols();
  if (n_budget > p) {
    throw std::invalid_argument("build_mask: budget exceeds patch count");
  }
  SelectionMask mask;
  mask.rows = grid.rows();
  mask.cols = grid.cols();
  mask.flat.assign(p, 0);

  const size_t n_top =
      static_cast<size_t>(std::floor(alpha * static_cast<double>(n_budget)));

  // Threshold stage: exact top-k, ties broken by lower 1D index.
  std::vector<size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  auto scores = grid.scores.data();
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  mask.lambda = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < n_top; ++k) {
    mask.flat[order[k]] = 1;
    mask.lambda = scores[order[k]];
  }

  // Random fill from the unselected remainder, uniform without replacement.
  const size_t n_fill = n_budget - n_top;
  if (n_fill > 0) {
    std::vector<size_t> remainder;
    remainder.reserve(p - n_top);
    for (size_t i = 0; i < p; ++i) {
      if (!mask.flat[i]) remainder.push_back(i);
    }
    Rng rng(rng_seed);
    for (size_t k = 0; k < n_fill; ++k) {
      const size_t j = k + rng.uniform_index(remainder.size() - k);
      std::swap(remainder[k], remainder[j]);
      mask.flat[remainder[k]] = 1;
    }
  }
  mask.n_selected = n_budget;
  return mask;
}

Tensor expand_mask(const SelectionMask& mask, size_t p) {
  const size_t h = mask.rows * p, w = mask.cols * p;
  std::vector<float> out(h * w, 0.0f);
  for (size_t i = 0; i < mask.count(); ++i) {
    if (!mask.flat[i]) continue;
    const auto [gy, gx] = index_to_grid(i, mask.cols);
    for (size_t y = 0; y < p; ++y) {
      std::fill_n(out.begin() + (gy * p + y) * w + gx * p, p, 1.0f);
    }
  }
  return Tensor::from_data({h, w}, std::move(out));
}

}  // namespace semcom
