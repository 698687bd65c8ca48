#include "semcom/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semcom/rng.hpp"

namespace semcom {

double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double step,
                  size_t max_coords_per_input, uint64_t coord_seed) {
  for (Tensor& t : inputs) t.set_requires_grad(true);

  Tensor loss = f(inputs);
  if (loss.size() != 1) {
    throw std::invalid_argument("grad_check: f must return a scalar");
  }
  if (!std::isfinite(loss.value_f64())) {
    throw std::runtime_error("grad_check: non-finite function value");
  }
  for (Tensor& t : inputs) t.zero_grad();
  loss.backward();

  std::vector<std::vector<float>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) {
    Tensor g = t.grad();
    analytic.emplace_back(g.data().begin(), g.data().end());
  }

  Rng coord_rng(derive_seed(coord_seed, 0x67726164));
  double max_rel = 0.0;
  NoGradGuard no_grad;
  PreciseModeGuard precise;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    std::vector<size_t> coords(data.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords_per_input > 0 && coords.size() > max_coords_per_input) {
      coord_rng.shuffle(coords);
      coords.resize(max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (size_t i : coords) {
      const float saved = data[i];
      data[i] = static_cast<float>(saved + step);
      const double x_plus = data[i];
      const double f_plus = f(inputs).value_f64();
      data[i] = static_cast<float>(saved - step);
      const double x_minus = data[i];
      const double f_minus = f(inputs).value_f64();
      data[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw std::runtime_error("grad_check: non-finite function value");
      }
      // Actual step after f32 quantization of the perturbed coordinate.
      const double fd = (f_plus - f_minus) / (x_plus - x_minus);
      const double ad = analytic[k][i];
      if (!std::isfinite(ad)) {
        throw std::runtime_error("grad_check: non-finite gradient");
      }
      const double denom = std::max({1.0, std::fabs(ad), std::fabs(fd)});
      max_rel = std::max(max_rel, std::fabs(ad - fd) / denom);
    }
  }
  return max_rel;
}

}  // namespace semcom
