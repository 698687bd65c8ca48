#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace semcom {

class Rng;

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Node of the reverse-mode graph. Tensors created while grad recording is on
// keep pointers to their parents plus a closure that pushes the node's grad
// into them. Parents never point at children, so the graph is acyclic and
// freed as soon as the root goes out of scope.
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;  // allocated lazily on first accumulation

  // Reductions keep their result in double as well; finite-difference
  // checks read it to avoid the final f32 rounding.
  bool has_precise = false;
  double precise = 0.0;
  // Full double-precision view of the values, populated only while
  // precise mode is on (see PreciseModeGuard).
  std::vector<double> shadow;

  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void()> backward_fn;

  size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

}  // namespace detail

// Grad recording is on by default; NoGradGuard turns it off for a scope
// (inference over frozen models, finite-difference re-evaluation).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// While on, every op also propagates a float64 shadow of its values, so a
// scalar read through value_f64() is the double-precision evaluation of the
// whole expression over the stored float32 leaves. Finite-difference checks
// run under this mode; float32 results are unchanged (they are the rounded
// shadow).
bool precise_mode();

class PreciseModeGuard {
 public:
  PreciseModeGuard();
  ~PreciseModeGuard();
  PreciseModeGuard(const PreciseModeGuard&) = delete;
  PreciseModeGuard& operator=(const PreciseModeGuard&) = delete;

 private:
  bool saved_;
};

// Dense row-major float32 array with reverse-mode autodiff. Value-semantics
// handle to a shared node; tensors are treated as immutable once created,
// except gradient accumulation during backward and in-place perturbation via
// mutable_data() (used by optimizers and grad_check).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value);
  static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f,
                      bool requires_grad = false);
  static Tensor rand_uniform(Shape shape, Rng& rng, float lo, float hi,
                             bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  size_t size() const;
  size_t rank() const { return shape().size(); }
  size_t extent(size_t axis) const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float operator[](size_t flat_index) const;
  float at(std::initializer_list<size_t> idx) const;
  void set(std::initializer_list<size_t> idx, float v);

  bool requires_grad() const;
  void set_requires_grad(bool v);

  // Scalar access. value_f64 returns the double-precision result when the
  // producing op kept one (reductions do).
  float value() const;
  double value_f64() const;

  bool has_grad() const;
  std::span<const float> grad_data() const;
  Tensor grad() const;  // copy; zeros if nothing accumulated yet
  void zero_grad();

  // Reverse pass from a scalar root.
  void backward();

  Tensor clone() const;   // deep copy, keeps requires_grad, drops graph
  Tensor detach() const;  // deep copy without grad tracking

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  detail::TensorImpl& ref() const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace semcom
