#pragma once

#include <string>
#include <vector>

#include "semcom/tensor.hpp"

namespace semcom {

// A named trainable tensor. Names are unique within a model and key the
// checkpoint format.
struct Parameter {
  std::string name;
  Tensor tensor;

  Parameter() = default;
  Parameter(std::string n, Tensor t) : name(std::move(n)), tensor(std::move(t)) {
    if (tensor.defined()) tensor.set_requires_grad(true);
  }
};

struct AdamConfig {
  float lr = 5e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Standard Adam with bias correction. Moment buffers are owned by the
// optimizer and indexed by the parameter list given at construction, so the
// update order (and therefore the result) is deterministic.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg = {});

  // Applies one update from the gradients currently accumulated on the
  // parameters. A parameter with no accumulated gradient is treated as
  // having gradient zero (its moments still decay).
  void step();
  void zero_grad();

  size_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  size_t step_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

}  // namespace semcom
