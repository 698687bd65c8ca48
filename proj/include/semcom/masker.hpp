#pragma once

#include <cstdint>
#include <vector>

#include "semcom/tensor.hpp"

namespace semcom {

// Head-averaged CLS attention over the P patches, laid out on the
// (rows, cols) patch grid. Entries are a sub-row of a softmax row (the CLS
// self-score is dropped), so they are non-negative and sum to at most 1.
struct ClsAttentionGrid {
  Tensor scores;  // (rows, cols)
  bool head_averaged = true;

  size_t rows() const { return scores.extent(0); }
  size_t cols() const { return scores.extent(1); }
};

// Row 0 of every head in the (H, P+1, P+1) stack, CLS self-entry dropped,
// reshaped row-major to (rows, cols), averaged over heads.
ClsAttentionGrid extract_cls_attention(const Tensor& attention, size_t rows,
                                       size_t cols);

// Which patches a packet carries. flat[i] is 1 iff patch with 1D index i is
// selected; grid accessors map through the row-major index convention.
struct SelectionMask {
  std::vector<uint8_t> flat;  // length P, values 0/1
  size_t rows = 0;
  size_t cols = 0;
  size_t n_selected = 0;
  // Score of the last threshold-admitted patch; +inf when the threshold
  // stage selected nothing.
  double lambda = 0.0;

  size_t count() const { return flat.size(); }
  bool selected(size_t index) const { return flat.at(index) != 0; }
  bool selected_at(size_t row, size_t col) const;

  // ceil(P/8) bytes, bit i LSB-first within byte = flat[i].
  std::vector<uint8_t> to_bitmap() const;
  static SelectionMask from_bitmap(const std::vector<uint8_t>& bitmap,
                                   size_t rows, size_t cols);
};

SelectionMask all_ones_mask(size_t rows, size_t cols);

// Top-floor(alpha*n_budget) patches by score (ties favor the lower 1D
// index), then uniform seeded fill from the remainder up to n_budget.
SelectionMask build_mask(const ClsAttentionGrid& grid, size_t n_budget,
                         double alpha, uint64_t rng_seed);

// Kronecker expansion with a p x p all-ones block: (rows*p, cols*p) pixel
// mask with a one at every pixel of every selected patch.
Tensor expand_mask(const SelectionMask& mask, size_t p);

}  // namespace semcom
