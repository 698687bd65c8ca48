#include "semcom/patches.hpp"

#include <stdexcept>

#include "semcom/ops.hpp"
#include "semcom/rng.hpp"

namespace semcom {

PatchGrid patchify(const Tensor& image, size_t p) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw std::invalid_argument("patchify: expected (3,h,w) image, got " +
                                shape_str(image.shape()));
  }
  if (p == 0) throw std::invalid_argument("patchify: patch size must be >= 1");
  const size_t h = image.extent(1), w = image.extent(2);
  if (h % p != 0 || w % p != 0) {
    throw std::invalid_argument("patchify: " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by " +
                                std::to_string(p));
  }
  PatchGrid grid;
  grid.rows = h / p;
  grid.cols = w / p;
  const size_t np = grid.count();
  std::vector<float> out(np * 3 * p * p);
  auto src = image.data();
  for (size_t i = 0; i < np; ++i) {
    const size_t gy = i / grid.cols, gx = i % grid.cols;
    for (size_t c = 0; c < 3; ++c) {
      for (size_t y = 0; y < p; ++y) {
        const size_t src_off = c * h * w + (gy * p + y) * w + gx * p;
        const size_t dst_off = ((i * 3 + c) * p + y) * p;
        for (size_t x = 0; x < p; ++x) out[dst_off + x] = src[src_off + x];
      }
    }
  }
  grid.patches = Tensor::from_data({np, 3, p, p}, std::move(out));
  return grid;
}

Tensor reassemble(const PatchGrid& grid) {
  const size_t p = grid.patch_size();
  const size_t h = grid.rows * p, w = grid.cols * p;
  std::vector<float> out(3 * h * w);
  auto src = grid.patches.data();
  for (size_t i = 0; i < grid.count(); ++i) {
    const size_t gy = i / grid.cols, gx = i % grid.cols;
    for (size_t c = 0; c < 3; ++c) {
      for (size_t y = 0; y < p; ++y) {
        const size_t src_off = ((i * 3 + c) * p + y) * p;
        const size_t dst_off = c * h * w + (gy * p + y) * w + gx * p;
        for (size_t x = 0; x < p; ++x) out[dst_off + x] = src[src_off + x];
      }
    }
  }
  return Tensor::from_data({3, h, w}, std::move(out));
}

std::pair<size_t, size_t> index_to_grid(size_t i, size_t cols) {
  if (cols == 0) throw std::invalid_argument("index_to_grid: zero columns");
  return {i / cols, i % cols};
}

size_t grid_to_index(size_t row, size_t col, size_t cols) {
  if (col >= cols) throw std::invalid_argument("grid_to_index: column out of range");
  return row * cols + col;
}

ProjectorParams::ProjectorParams(size_t embed_dim, size_t patch,
                                 size_t num_patches, Rng& rng, float init_std)
    : w_proj("proj.w",
             Tensor::randn({embed_dim, 3 * patch * patch}, rng, init_std)),
      b("proj.b", Tensor::zeros({embed_dim})),
      cls_token("proj.cls", Tensor::randn({embed_dim}, rng, init_std)),
      pos_embed("proj.pos",
                Tensor::randn({embed_dim, num_patches + 1}, rng, init_std)) {}

std::vector<Parameter*> ProjectorParams::parameters() {
  return {&w_proj, &b, &cls_token, &pos_embed};
}

TokenMatrix project(const PatchGrid& grid, ProjectorParams& params) {
  const size_t np = grid.count();
  const size_t p = grid.patch_size();
  const size_t flat = 3 * p * p;
  const size_t d = params.w_proj.tensor.extent(0);
  if (params.w_proj.tensor.extent(1) != flat) {
    throw std::invalid_argument("project: patch size mismatch with W_proj");
  }
  if (params.pos_embed.tensor.extent(1) != np + 1) {
    throw std::invalid_argument("project: patch count mismatch with pos_embed");
  }
  // Patches as a (3p^2, P) constant matrix, one flattened patch per column.
  std::vector<float> cols(flat * np);
  auto src = grid.patches.data();
  for (size_t i = 0; i < np; ++i) {
    for (size_t k = 0; k < flat; ++k) cols[k * np + i] = src[i * flat + k];
  }
  Tensor patch_cols = Tensor::from_data({flat, np}, std::move(cols));

  Tensor projected =
      add_col_bias(matmul(params.w_proj.tensor, patch_cols), params.b.tensor);
  Tensor cls = reshape(params.cls_token.tensor, {d, 1});
  Tensor tokens = concat_cols({cls, projected});
  return add(tokens, params.pos_embed.tensor);
}

}  // namespace semcom
