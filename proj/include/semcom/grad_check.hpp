#pragma once

#include <functional>
#include <vector>

#include "semcom/tensor.hpp"

namespace semcom {

// Scalar-valued function of several tensors, re-evaluated by grad_check
// after in-place perturbations of its inputs.
using ScalarFn = std::function<Tensor(std::vector<Tensor>&)>;

// Compares the reverse-mode gradient of f against central finite differences
// (default step 1e-3) and returns the maximum relative error over all checked
// coordinates, where the per-coordinate error is
//   |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
// The effective step is recomputed from the stored float32 perturbations, so
// quantization of the step itself does not pollute the estimate.
//
// max_coords_per_input == 0 checks every coordinate; a positive value checks
// a seeded random subset per input (used for large parameter blocks).
// Throws std::runtime_error if f or a gradient is non-finite.
double grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                  double step = 1e-3, size_t max_coords_per_input = 0,
                  uint64_t coord_seed = 0);

}  // namespace semcom
