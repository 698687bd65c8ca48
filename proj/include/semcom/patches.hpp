#pragma once

#include <utility>

#include "semcom/optim.hpp"
#include "semcom/tensor.hpp"

namespace semcom {

class Rng;

// Token matrix (D, P+1); column 0 is the CLS slot, column i >= 1 carries
// patch i-1 in 1D-index order.
using TokenMatrix = Tensor;

// P patches of a (3,h,w) image, each (3,p,p), in row-major 1D-index order.
struct PatchGrid {
  Tensor patches;  // (P, 3, p, p)
  size_t rows = 0;
  size_t cols = 0;

  size_t count() const { return rows * cols; }
  size_t patch_size() const { return patches.extent(2); }
};

PatchGrid patchify(const Tensor& image, size_t p);
// Inverse of patchify; bit-exact.
Tensor reassemble(const PatchGrid& grid);

// Row-major mapping between the 1D patch index and its grid position.
std::pair<size_t, size_t> index_to_grid(size_t i, size_t cols);
size_t grid_to_index(size_t row, size_t col, size_t cols);

struct ProjectorParams {
  Parameter w_proj;    // (D, 3p^2)
  Parameter b;         // (D)
  Parameter cls_token; // (D)
  Parameter pos_embed; // (D, P+1)

  ProjectorParams() = default;
  ProjectorParams(size_t embed_dim, size_t patch, size_t num_patches, Rng& rng,
                  float init_std = 0.02f);
  std::vector<Parameter*> parameters();
};

// Flatten, project, prepend CLS, add positional encodings. Column 0 equals
// cls_token + pos_embed[:,0]; column i equals W_proj*flat(X_{i-1}) + b +
// pos_embed[:,i]. Differentiable in the parameters.
TokenMatrix project(const PatchGrid& grid, ProjectorParams& params);

}  // namespace semcom
