#include "semcom/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace semcom {

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    if (!p || !p->tensor.defined()) {
      throw std::invalid_argument("adam: undefined parameter");
    }
    m_.emplace_back(p->tensor.size(), 0.0f);
    v_.emplace_back(p->tensor.size(), 0.0f);
  }
}

void AdamOptimizer::step() {
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k]->tensor;
    if (t.size() != m_[k].size()) {
      throw std::invalid_argument("adam: parameter shape changed");
    }
    auto data = t.mutable_data();
    const bool has_grad = t.has_grad();
    std::span<const float> grad;
    if (has_grad) grad = t.grad_data();
    for (size_t i = 0; i < data.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
      const double m = b1 * m_[k][i] + (1.0 - b1) * g;
      const double v = b2 * v_[k][i] + (1.0 - b2) * g * g;
      m_[k][i] = static_cast<float>(m);
      v_[k][i] = static_cast<float>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      data[i] = static_cast<float>(
          data[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Parameter* p : params_) p->tensor.zero_grad();
}

}  // namespace semcom
