#include "semcom/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "semcom/rng.hpp"

namespace semcom {

size_t shape_numel(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_precise_mode = false;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

bool precise_mode() { return g_precise_mode; }

PreciseModeGuard::PreciseModeGuard() : saved_(g_precise_mode) {
  g_precise_mode = true;
}
PreciseModeGuard::~PreciseModeGuard() { g_precise_mode = saved_; }

detail::TensorImpl& Tensor::ref() const {
  if (!impl_) throw std::runtime_error("tensor: use of undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: data length " +
                                std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value) { return full(Shape{}, value, false); }

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.impl()->data) {
    v = static_cast<float>(rng.normal() * stddev);
  }
  return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, float lo, float hi,
                            bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.impl()->data) {
    v = static_cast<float>(rng.uniform(lo, hi));
  }
  return t;
}

const Shape& Tensor::shape() const { return ref().shape; }

size_t Tensor::size() const { return ref().data.size(); }

size_t Tensor::extent(size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw std::invalid_argument("tensor: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::span<const float> Tensor::data() const {
  return {ref().data.data(), ref().data.size()};
}

std::span<float> Tensor::mutable_data() {
  return {ref().data.data(), ref().data.size()};
}

float Tensor::operator[](size_t flat_index) const {
  return ref().data.at(flat_index);
}

namespace {
size_t flat_offset(const Shape& shape, std::initializer_list<size_t> idx) {
  if (idx.size() != shape.size()) {
    throw std::invalid_argument("tensor: index rank mismatch");
  }
  size_t off = 0;
  size_t axis = 0;
  for (size_t i : idx) {
    if (i >= shape[axis]) throw std::out_of_range("tensor: index out of range");
    off = off * shape[axis] + i;
    ++axis;
  }
  return off;
}
}  // namespace

float Tensor::at(std::initializer_list<size_t> idx) const {
  return ref().data[flat_offset(ref().shape, idx)];
}

void Tensor::set(std::initializer_list<size_t> idx, float v) {
  ref().data[flat_offset(ref().shape, idx)] = v;
}

bool Tensor::requires_grad() const { return ref().requires_grad; }

void Tensor::set_requires_grad(bool v) { ref().requires_grad = v; }

float Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: value() needs a single-element tensor");
  }
  return ref().data[0];
}

double Tensor::value_f64() const {
  if (ref().has_precise) return ref().precise;
  return static_cast<double>(value());
}

bool Tensor::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

std::span<const float> Tensor::grad_data() const {
  auto& r = ref();
  if (r.grad.empty()) throw std::runtime_error("tensor: no gradient accumulated");
  return {r.grad.data(), r.grad.size()};
}

Tensor Tensor::grad() const {
  auto& r = ref();
  if (r.grad.empty()) return Tensor::zeros(r.shape);
  return Tensor::from_data(r.shape, r.grad);
}

void Tensor::zero_grad() {
  auto& r = ref();
  if (!r.grad.empty()) r.grad.assign(r.data.size(), 0.0f);
}

void Tensor::backward() {
  auto& root = ref();
  if (root.data.size() != 1) {
    throw std::invalid_argument("tensor: backward() needs a scalar root");
  }

  // Iterative DFS post-order over the recorded graph.
  std::vector<detail::TensorImpl*> topo;
  std::unordered_set<detail::TensorImpl*> visited;
  struct Frame {
    detail::TensorImpl* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (visited.insert(&root).second) stack.push_back({&root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  root.ensure_grad();
  root.grad[0] += 1.0f;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backward_fn && !(*it)->grad.empty()) {
      (*it)->backward_fn();
    }
  }
}

Tensor Tensor::clone() const {
  auto& r = ref();
  Tensor t = Tensor::from_data(r.shape, r.data, r.requires_grad);
  return t;
}

Tensor Tensor::detach() const {
  auto& r = ref();
  return Tensor::from_data(r.shape, r.data, false);
}

}  // namespace semcom
