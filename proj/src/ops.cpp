#include "semcom/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace semcom {

namespace {

using detail::TensorImpl;

std::shared_ptr<TensorImpl> make_out(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), 0.0f);
  impl->shape = std::move(shape);
  return impl;
}

bool wants_grad(std::initializer_list<const Tensor*> parents) {
  if (!grad_enabled()) return false;
  for (const Tensor* p : parents) {
    if (p->requires_grad()) return true;
  }
  return false;
}

void attach(const std::shared_ptr<TensorImpl>& out,
            std::vector<std::shared_ptr<TensorImpl>> parents,
            std::function<void()> fn) {
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void check_rank(const Tensor& t, size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " +
                                shape_str(t.shape()));
  }
}

// Double view of a tensor's values: its shadow when present, the widened
// float32 data otherwise (widening is exact).
const double* f64_view(const std::shared_ptr<TensorImpl>& t,
                       std::vector<double>& scratch) {
  if (!t->shadow.empty()) return t->shadow.data();
  scratch.resize(t->data.size());
  for (size_t i = 0; i < t->data.size(); ++i) {
    scratch[i] = static_cast<double>(t->data[i]);
  }
  return scratch.data();
}

void round_shadow(TensorImpl* out) {
  for (size_t i = 0; i < out->shadow.size(); ++i) {
    out->data[i] = static_cast<float>(out->shadow[i]);
  }
}

// Elementwise op with a value->value map and a (x, dy)->dx map.
template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Bwd bwd) {
  auto out = make_out(x.shape());
  auto xi = x.impl();
  const size_t n = xi->data.size();
  if (precise_mode()) {
    std::vector<double> sx;
    const double* X = f64_view(xi, sx);
    out->shadow.resize(n);
    for (size_t i = 0; i < n; ++i) out->shadow[i] = fwd(X[i]);
    round_shadow(out.get());
  } else {
    for (size_t i = 0; i < n; ++i) {
      out->data[i] = static_cast<float>(fwd(static_cast<double>(xi->data[i])));
    }
  }
  if (wants_grad({&x})) {
    TensorImpl* self = out.get();
    attach(out, {xi}, [self, xi, bwd]() {
      xi->ensure_grad();
      const size_t n2 = self->grad.size();
      for (size_t i = 0; i < n2; ++i) {
        xi->grad[i] += static_cast<float>(
            bwd(static_cast<double>(xi->data[i])) * self->grad[i]);
      }
    });
  }
  return Tensor(out);
}

// Elementwise binary op: fwd(a, b), with per-parent backward maps.
template <typename Fwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, std::function<void()> backward,
                          const std::shared_ptr<TensorImpl>& ai,
                          const std::shared_ptr<TensorImpl>& bi,
                          std::shared_ptr<TensorImpl>& out) {
  check_same_shape(a, b, name);
  const size_t n = out->data.size();
  if (precise_mode()) {
    std::vector<double> sa, sb;
    const double* A = f64_view(ai, sa);
    const double* B = f64_view(bi, sb);
    out->shadow.resize(n);
    for (size_t i = 0; i < n; ++i) out->shadow[i] = fwd(A[i], B[i]);
    round_shadow(out.get());
  } else {
    for (size_t i = 0; i < n; ++i) {
      out->data[i] = static_cast<float>(fwd(
          static_cast<double>(ai->data[i]), static_cast<double>(bi->data[i])));
    }
  }
  if (wants_grad({&a, &b})) attach(out, {ai, bi}, std::move(backward));
  return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto ai = a.impl(), bi = b.impl();
  auto out = make_out(a.shape());
  TensorImpl* self = out.get();
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [self, ai, bi]() {
        const size_t n = self->grad.size();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < n; ++i) ai->grad[i] += self->grad[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < n; ++i) bi->grad[i] += self->grad[i];
        }
      },
      ai, bi, out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto ai = a.impl(), bi = b.impl();
  auto out = make_out(a.shape());
  TensorImpl* self = out.get();
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [self, ai, bi]() {
        const size_t n = self->grad.size();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < n; ++i) ai->grad[i] += self->grad[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < n; ++i) bi->grad[i] -= self->grad[i];
        }
      },
      ai, bi, out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto ai = a.impl(), bi = b.impl();
  auto out = make_out(a.shape());
  TensorImpl* self = out.get();
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [self, ai, bi]() {
        const size_t n = self->grad.size();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < n; ++i)
            ai->grad[i] += self->grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < n; ++i)
            bi->grad[i] += self->grad[i] * ai->data[i];
        }
      },
      ai, bi, out);
}

Tensor scale(const Tensor& a, float s) {
  return unary_elementwise(
      a, [s](double v) { return v * s; }, [s](double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return unary_elementwise(
      x,
      [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [=](double v) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) +
               v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double v) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.size()) {
    throw std::invalid_argument("reshape: element count mismatch, " +
                                shape_str(a.shape()) + " -> " +
                                shape_str(new_shape));
  }
  auto ai = a.impl();
  auto out = make_out(new_shape);
  out->data = ai->data;
  if (precise_mode() && !ai->shadow.empty()) out->shadow = ai->shadow;
  if (wants_grad({&a})) {
    TensorImpl* self = out.get();
    attach(out, {ai}, [self, ai]() {
      ai->ensure_grad();
      const size_t n = self->grad.size();
      for (size_t i = 0; i < n; ++i) ai->grad[i] += self->grad[i];
    });
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  check_rank(a, 2, "transpose");
  const size_t r = a.extent(0), c = a.extent(1);
  auto ai = a.impl();
  auto out = make_out({c, r});
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) {
      out->data[j * r + i] = ai->data[i * c + j];
    }
  }
  if (precise_mode() && !ai->shadow.empty()) {
    out->shadow.resize(r * c);
    for (size_t i = 0; i < r; ++i) {
      for (size_t j = 0; j < c; ++j) {
        out->shadow[j * r + i] = ai->shadow[i * c + j];
      }
    }
  }
  if (wants_grad({&a})) {
    TensorImpl* self = out.get();
    attach(out, {ai}, [self, ai, r, c]() {
      ai->ensure_grad();
      for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) {
          ai->grad[i * c + j] += self->grad[j * r + i];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, size_t row0, size_t nrows) {
  check_rank(a, 2, "slice_rows");
  const size_t r = a.extent(0), c = a.extent(1);
  if (row0 + nrows > r) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  auto ai = a.impl();
  auto out = make_out({nrows, c});
  std::copy(ai->data.begin() + row0 * c, ai->data.begin() + (row0 + nrows) * c,
            out->data.begin());
  if (precise_mode() && !ai->shadow.empty()) {
    out->shadow.assign(ai->shadow.begin() + row0 * c,
                       ai->shadow.begin() + (row0 + nrows) * c);
  }
  if (wants_grad({&a})) {
    TensorImpl* self = out.get();
    attach(out, {ai}, [self, ai, row0, c]() {
      ai->ensure_grad();
      const size_t n = self->grad.size();
      for (size_t i = 0; i < n; ++i) ai->grad[row0 * c + i] += self->grad[i];
    });
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, size_t col0, size_t ncols) {
  check_rank(a, 2, "slice_cols");
  const size_t r = a.extent(0), c = a.extent(1);
  if (col0 + ncols > c) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  auto ai = a.impl();
  auto out = make_out({r, ncols});
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < ncols; ++j) {
      out->data[i * ncols + j] = ai->data[i * c + col0 + j];
    }
  }
  if (precise_mode() && !ai->shadow.empty()) {
    out->shadow.resize(r * ncols);
    for (size_t i = 0; i < r; ++i) {
      for (size_t j = 0; j < ncols; ++j) {
        out->shadow[i * ncols + j] = ai->shadow[i * c + col0 + j];
      }
    }
  }
  if (wants_grad({&a})) {
    TensorImpl* self = out.get();
    attach(out, {ai}, [self, ai, col0, r, c]() {
      ai->ensure_grad();
      const size_t ncols2 = self->shape[1];
      for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < ncols2; ++j) {
          ai->grad[i * c + col0 + j] += self->grad[i * ncols2 + j];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const size_t c = parts[0].extent(1);
  size_t rows = 0;
  for (const Tensor& p : parts) {
    check_rank(p, 2, "concat_rows");
    if (p.extent(1) != c) {
      throw std::invalid_argument("concat_rows: column count mismatch");
    }
    rows += p.extent(0);
  }
  auto out = make_out({rows, c});
  const bool prec = precise_mode();
  if (prec) out->shadow.resize(rows * c);
  std::vector<std::shared_ptr<TensorImpl>> impls;
  size_t off = 0;
  bool grad = false;
  for (const Tensor& p : parts) {
    auto pi = p.impl();
    std::copy(pi->data.begin(), pi->data.end(), out->data.begin() + off);
    if (prec) {
      std::vector<double> sp;
      const double* P = f64_view(pi, sp);
      std::copy(P, P + pi->data.size(), out->shadow.begin() + off);
    }
    off += pi->data.size();
    grad = grad || p.requires_grad();
    impls.push_back(std::move(pi));
  }
  if (grad_enabled() && grad) {
    TensorImpl* self = out.get();
    attach(out, impls, [self, impls]() {
      size_t off2 = 0;
      for (const auto& pi : impls) {
        const size_t n = pi->data.size();
        if (pi->requires_grad) {
          pi->ensure_grad();
          for (size_t i = 0; i < n; ++i) pi->grad[i] += self->grad[off2 + i];
        }
        off2 += n;
      }
    });
  }
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const size_t r = parts[0].extent(0);
  size_t cols = 0;
  for (const Tensor& p : parts) {
    check_rank(p, 2, "concat_cols");
    if (p.extent(0) != r) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    cols += p.extent(1);
  }
  auto out = make_out({r, cols});
  const bool prec = precise_mode();
  if (prec) out->shadow.resize(r * cols);
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<size_t> offsets;
  size_t off = 0;
  bool grad = false;
  for (const Tensor& p : parts) {
    auto pi = p.impl();
    const size_t pc = p.extent(1);
    std::vector<double> sp;
    const double* P = prec ? f64_view(pi, sp) : nullptr;
    for (size_t i = 0; i < r; ++i) {
      std::copy(pi->data.begin() + i * pc, pi->data.begin() + (i + 1) * pc,
                out->data.begin() + i * cols + off);
      if (prec) {
        std::copy(P + i * pc, P + (i + 1) * pc,
                  out->shadow.begin() + i * cols + off);
      }
    }
    offsets.push_back(off);
    off += pc;
    grad = grad || p.requires_grad();
    impls.push_back(std::move(pi));
  }
  if (grad_enabled() && grad) {
    TensorImpl* self = out.get();
    attach(out, impls, [self, impls, offsets, r, cols]() {
      for (size_t k = 0; k < impls.size(); ++k) {
        const auto& pi = impls[k];
        if (!pi->requires_grad) continue;
        pi->ensure_grad();
        const size_t pc = pi->shape[1];
        for (size_t i = 0; i < r; ++i) {
          for (size_t j = 0; j < pc; ++j) {
            pi->grad[i * pc + j] += self->grad[i * cols + offsets[k] + j];
          }
        }
      }
    });
  }
  return Tensor(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  auto ai = a.impl();
  auto bi = b.impl();
  auto out = make_out({m, n});
  if (precise_mode()) {
    std::vector<double> sa, sb;
    const double* A = f64_view(ai, sa);
    const double* B = f64_view(bi, sb);
    out->shadow.resize(m * n);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (size_t l = 0; l < k; ++l) acc += A[i * k + l] * B[l * n + j];
        out->shadow[i * n + j] = acc;
      }
    }
    round_shadow(out.get());
  } else {
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        const float* arow = ai->data.data() + i * k;
        const float* bcol = bi->data.data() + j;
        for (size_t l = 0; l < k; ++l) {
          acc += static_cast<double>(arow[l]) * bcol[l * n];
        }
        out->data[i * n + j] = static_cast<float>(acc);
      }
    }
  }
  if (wants_grad({&a, &b})) {
    TensorImpl* self = out.get();
    attach(out, {ai, bi}, [self, ai, bi, m, k, n]() {
      if (ai->requires_grad) {
        ai->ensure_grad();
        // dA = dC * B^T
        for (size_t i = 0; i < m; ++i) {
          for (size_t l = 0; l < k; ++l) {
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) {
              acc += static_cast<double>(self->grad[i * n + j]) *
                     bi->data[l * n + j];
            }
            ai->grad[i * k + l] += static_cast<float>(acc);
          }
        }
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        // dB = A^T * dC
        for (size_t l = 0; l < k; ++l) {
          for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t i = 0; i < m; ++i) {
              acc += static_cast<double>(ai->data[i * k + l]) *
                     self->grad[i * n + j];
            }
            bi->grad[l * n + j] += static_cast<float>(acc);
          }
        }
      }
    });
  }
  return Tensor(out);
}

Tensor add_col_bias(const Tensor& m, const Tensor& bias) {
  check_rank(m, 2, "add_col_bias");
  check_rank(bias, 1, "add_col_bias");
  const size_t r = m.extent(0), c = m.extent(1);
  if (bias.extent(0) != r) {
    throw std::invalid_argument("add_col_bias: bias length mismatch");
  }
  auto mi = m.impl();
  auto bi = bias.impl();
  auto out = make_out({r, c});
  if (precise_mode()) {
    std::vector<double> sm, sb;
    const double* M = f64_view(mi, sm);
    const double* B = f64_view(bi, sb);
    out->shadow.resize(r * c);
    for (size_t i = 0; i < r; ++i) {
      for (size_t j = 0; j < c; ++j) {
        out->shadow[i * c + j] = M[i * c + j] + B[i];
      }
    }
    round_shadow(out.get());
  } else {
    for (size_t i = 0; i < r; ++i) {
      const float bv = bi->data[i];
      for (size_t j = 0; j < c; ++j) {
        out->data[i * c + j] = mi->data[i * c + j] + bv;
      }
    }
  }
  if (wants_grad({&m, &bias})) {
    TensorImpl* self = out.get();
    attach(out, {mi, bi}, [self, mi, bi, r, c]() {
      if (mi->requires_grad) {
        mi->ensure_grad();
        const size_t n = r * c;
        for (size_t i = 0; i < n; ++i) mi->grad[i] += self->grad[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (size_t j = 0; j < c; ++j) acc += self->grad[i * c + j];
          bi->grad[i] += static_cast<float>(acc);
        }
      }
    });
  }
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps) {
  check_rank(x, 2, "layer_norm");
  check_rank(gain, 1, "layer_norm");
  check_rank(bias, 1, "layer_norm");
  const size_t r = x.extent(0), c = x.extent(1);
  if (gain.extent(0) != r || bias.extent(0) != r) {
    throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  }
  auto xi = x.impl();
  auto gi = gain.impl();
  auto bi = bias.impl();
  auto out = make_out({r, c});
  const bool prec = precise_mode();
  std::vector<double> sx, sg, sb;
  const double* X = prec ? f64_view(xi, sx) : nullptr;
  const double* G = prec ? f64_view(gi, sg) : nullptr;
  const double* B = prec ? f64_view(bi, sb) : nullptr;
  if (prec) out->shadow.resize(r * c);
  // Column statistics in double; kept for the backward pass.
  auto mu = std::make_shared<std::vector<double>>(c);
  auto inv = std::make_shared<std::vector<double>>(c);
  for (size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (size_t i = 0; i < r; ++i) {
      s += prec ? X[i * c + j] : static_cast<double>(xi->data[i * c + j]);
    }
    const double m = s / static_cast<double>(r);
    double v = 0.0;
    for (size_t i = 0; i < r; ++i) {
      const double d =
          (prec ? X[i * c + j] : static_cast<double>(xi->data[i * c + j])) - m;
      v += d * d;
    }
    v /= static_cast<double>(r);
    (*mu)[j] = m;
    (*inv)[j] = 1.0 / std::sqrt(v + static_cast<double>(eps));
    for (size_t i = 0; i < r; ++i) {
      const double xv =
          prec ? X[i * c + j] : static_cast<double>(xi->data[i * c + j]);
      const double gv = prec ? G[i] : static_cast<double>(gi->data[i]);
      const double bv = prec ? B[i] : static_cast<double>(bi->data[i]);
      const double yv = gv * ((xv - m) * (*inv)[j]) + bv;
      if (prec) out->shadow[i * c + j] = yv;
      out->data[i * c + j] = static_cast<float>(yv);
    }
  }
  if (wants_grad({&x, &gain, &bias})) {
    TensorImpl* self = out.get();
    attach(out, {xi, gi, bi}, [self, xi, gi, bi, mu, inv, r, c]() {
      std::vector<double> dxhat(r);
      std::vector<double> xhat(r);
      for (size_t j = 0; j < c; ++j) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (size_t i = 0; i < r; ++i) {
          xhat[i] = (xi->data[i * c + j] - (*mu)[j]) * (*inv)[j];
          dxhat[i] = static_cast<double>(self->grad[i * c + j]) * gi->data[i];
          sum_dxhat += dxhat[i];
          sum_dxhat_xhat += dxhat[i] * xhat[i];
        }
        if (xi->requires_grad) {
          xi->ensure_grad();
          const double rinv = 1.0 / static_cast<double>(r);
          for (size_t i = 0; i < r; ++i) {
            xi->grad[i * c + j] += static_cast<float>(
                (*inv)[j] * (dxhat[i] - rinv * sum_dxhat -
                             xhat[i] * rinv * sum_dxhat_xhat));
          }
        }
        if (gi->requires_grad) {
          gi->ensure_grad();
          for (size_t i = 0; i < r; ++i) {
            gi->grad[i] +=
                static_cast<float>(self->grad[i * c + j] * xhat[i]);
          }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < r; ++i) bi->grad[i] += self->grad[i * c + j];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor softmax(const Tensor& x, size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for " + shape_str(s));
  }
  const size_t len = s[axis];
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  auto xi = x.impl();
  auto out = make_out(s);
  const bool prec = precise_mode();
  std::vector<double> sx;
  const double* X = prec ? f64_view(xi, sx) : nullptr;
  if (prec) out->shadow.resize(xi->data.size());
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t l = 0; l < len; ++l) {
        const double v = prec ? X[base + l * inner]
                              : static_cast<double>(xi->data[base + l * inner]);
        mx = std::max(mx, v);
      }
      double denom = 0.0;
      for (size_t l = 0; l < len; ++l) {
        const double v = prec ? X[base + l * inner]
                              : static_cast<double>(xi->data[base + l * inner]);
        denom += std::exp(v - mx);
      }
      for (size_t l = 0; l < len; ++l) {
        const double v = prec ? X[base + l * inner]
                              : static_cast<double>(xi->data[base + l * inner]);
        const double y = std::exp(v - mx) / denom;
        if (prec) out->shadow[base + l * inner] = y;
        out->data[base + l * inner] = static_cast<float>(y);
      }
    }
  }
  if (wants_grad({&x})) {
    TensorImpl* self = out.get();
    attach(out, {xi}, [self, xi, outer, inner, len]() {
      xi->ensure_grad();
      for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
          const size_t base = o * len * inner + in;
          double dot = 0.0;
          for (size_t l = 0; l < len; ++l) {
            const size_t k = base + l * inner;
            dot += static_cast<double>(self->data[k]) * self->grad[k];
          }
          for (size_t l = 0; l < len; ++l) {
            const size_t k = base + l * inner;
            xi->grad[k] += static_cast<float>(
                static_cast<double>(self->data[k]) * (self->grad[k] - dot));
          }
        }
      }
    });
  }
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, size_t target) {
  check_rank(logits, 1, "cross_entropy");
  const size_t n = logits.extent(0);
  if (target >= n) {
    throw std::invalid_argument("cross_entropy: target " +
                                std::to_string(target) + " out of range for " +
                                std::to_string(n) + " classes");
  }
  auto xi = logits.impl();
  std::vector<double> sx;
  const double* X = f64_view(xi, sx);
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) mx = std::max(mx, X[i]);
  double denom = 0.0;
  for (size_t i = 0; i < n; ++i) denom += std::exp(X[i] - mx);
  const double lse = mx + std::log(denom);
  const double loss = lse - X[target];
  auto out = make_out(Shape{});
  out->data[0] = static_cast<float>(loss);
  out->has_precise = true;
  out->precise = loss;
  if (precise_mode()) out->shadow.assign(1, loss);
  if (wants_grad({&logits})) {
    TensorImpl* self = out.get();
    attach(out, {xi}, [self, xi, target, lse, n]() {
      xi->ensure_grad();
      const double g = self->grad[0];
      for (size_t i = 0; i < n; ++i) {
        const double p = std::exp(static_cast<double>(xi->data[i]) - lse);
        xi->grad[i] +=
            static_cast<float>(g * (p - (i == target ? 1.0 : 0.0)));
      }
    });
  }
  return Tensor(out);
}

Tensor sum(const Tensor& x) {
  auto xi = x.impl();
  std::vector<double> sx;
  const double* X = f64_view(xi, sx);
  double acc = 0.0;
  for (size_t i = 0; i < xi->data.size(); ++i) acc += X[i];
  auto out = make_out(Shape{});
  out->data[0] = static_cast<float>(acc);
  out->has_precise = true;
  out->precise = acc;
  if (precise_mode()) out->shadow.assign(1, acc);
  if (wants_grad({&x})) {
    TensorImpl* self = out.get();
    attach(out, {xi}, [self, xi]() {
      xi->ensure_grad();
      const float g = self->grad[0];
      for (float& gv : xi->grad) gv += g;
    });
  }
  return Tensor(out);
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  auto xi = x.impl();
  std::vector<double> sx;
  const double* X = f64_view(xi, sx);
  double acc = 0.0;
  for (size_t i = 0; i < xi->data.size(); ++i) acc += X[i];
  const double m = acc / static_cast<double>(xi->data.size());
  auto out = make_out(Shape{});
  out->data[0] = static_cast<float>(m);
  out->has_precise = true;
  out->precise = m;
  if (precise_mode()) out->shadow.assign(1, m);
  if (wants_grad({&x})) {
    TensorImpl* self = out.get();
    attach(out, {xi}, [self, xi]() {
      xi->ensure_grad();
      const float g = static_cast<float>(
          self->grad[0] / static_cast<double>(xi->data.size()));
      for (float& gv : xi->grad) gv += g;
    });
  }
  return Tensor(out);
}

Tensor masked_mse(const Tensor& x, const Tensor& xhat, const Tensor& mask) {
  check_same_shape(x, xhat, "masked_mse");
  check_rank(x, 3, "masked_mse");
  check_rank(mask, 2, "masked_mse");
  const size_t ch = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (mask.extent(0) != h || mask.extent(1) != w) {
    throw std::invalid_argument("masked_mse: mask shape mismatch");
  }
  auto xi = x.impl();
  auto yi = xhat.impl();
  auto mi = mask.impl();
  size_t selected = 0;
  for (float v : mi->data) selected += (v != 0.0f) ? 1 : 0;
  const double denom = static_cast<double>(ch) * static_cast<double>(selected);
  std::vector<double> sx, sy;
  const double* X = f64_view(xi, sx);
  const double* Y = f64_view(yi, sy);
  double acc = 0.0;
  if (selected > 0) {
    for (size_t c = 0; c < ch; ++c) {
      for (size_t p = 0; p < h * w; ++p) {
        if (mi->data[p] == 0.0f) continue;
        const double d = X[c * h * w + p] - Y[c * h * w + p];
        acc += d * d;
      }
    }
    acc /= denom;
  }
  auto out = make_out(Shape{});
  out->data[0] = static_cast<float>(acc);
  out->has_precise = true;
  out->precise = acc;
  if (precise_mode()) out->shadow.assign(1, acc);
  if (wants_grad({&x, &xhat})) {
    TensorImpl* self = out.get();
    attach(out, {xi, yi}, [self, xi, yi, mi, ch, h, w, selected, denom]() {
      if (selected == 0) return;
      const double g = self->grad[0];
      if (xi->requires_grad) xi->ensure_grad();
      if (yi->requires_grad) yi->ensure_grad();
      for (size_t c = 0; c < ch; ++c) {
        for (size_t p = 0; p < h * w; ++p) {
          if (mi->data[p] == 0.0f) continue;
          const size_t k = c * h * w + p;
          const double d = static_cast<double>(xi->data[k]) - yi->data[k];
          const float gv = static_cast<float>(g * 2.0 * d / denom);
          if (xi->requires_grad) xi->grad[k] += gv;
          if (yi->requires_grad) yi->grad[k] -= gv;
        }
      }
    });
  }
  return Tensor(out);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride,
              size_t pad) {
  check_rank(x, 3, "conv2d");
  check_rank(w, 4, "conv2d");
  check_rank(b, 1, "conv2d");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  const size_t cin = x.extent(0), h = x.extent(1), ww = x.extent(2);
  const size_t cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  if (w.extent(1) != cin || b.extent(0) != cout) {
    throw std::invalid_argument("conv2d: weight/bias shape mismatch");
  }
  if (h + 2 * pad < kh || ww + 2 * pad < kw) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  const size_t ho = (h + 2 * pad - kh) / stride + 1;
  const size_t wo = (ww + 2 * pad - kw) / stride + 1;
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.impl();
  auto out = make_out({cout, ho, wo});
  const bool prec = precise_mode();
  std::vector<double> sx, sw, sb;
  const double* X = prec ? f64_view(xi, sx) : nullptr;
  const double* W = prec ? f64_view(wi, sw) : nullptr;
  const double* B = prec ? f64_view(bi, sb) : nullptr;
  if (prec) out->shadow.resize(cout * ho * wo);
  for (size_t co = 0; co < cout; ++co) {
    for (size_t oy = 0; oy < ho; ++oy) {
      for (size_t ox = 0; ox < wo; ++ox) {
        double acc = prec ? B[co] : static_cast<double>(bi->data[co]);
        for (size_t ci = 0; ci < cin; ++ci) {
          for (size_t ky = 0; ky < kh; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) -
                            static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const size_t xrow = (ci * h + iy) * ww;
            const size_t wrow = ((co * cin + ci) * kh + ky) * kw;
            for (size_t kx = 0; kx < kw; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) -
                              static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(ww)) continue;
              if (prec) {
                acc += X[xrow + ix] * W[wrow + kx];
              } else {
                acc += static_cast<double>(xi->data[xrow + ix]) *
                       wi->data[wrow + kx];
              }
            }
          }
        }
        const size_t k = (co * ho + oy) * wo + ox;
        if (prec) out->shadow[k] = acc;
        out->data[k] = static_cast<float>(acc);
      }
    }
  }
  if (wants_grad({&x, &w, &b})) {
    TensorImpl* self = out.get();
    attach(out, {xi, wi, bi},
           [self, xi, wi, bi, cin, cout, h, ww, kh, kw, ho, wo, stride, pad]() {
             const auto& g = self->grad;
             if (bi->requires_grad) {
               bi->ensure_grad();
               for (size_t co = 0; co < cout; ++co) {
                 double acc = 0.0;
                 for (size_t p = 0; p < ho * wo; ++p) acc += g[co * ho * wo + p];
                 bi->grad[co] += static_cast<float>(acc);
               }
             }
             if (wi->requires_grad) {
               wi->ensure_grad();
               std::vector<double> dw(wi->data.size(), 0.0);
               for (size_t co = 0; co < cout; ++co) {
                 for (size_t ci = 0; ci < cin; ++ci) {
                   for (size_t ky = 0; ky < kh; ++ky) {
                     for (size_t kx = 0; kx < kw; ++kx) {
                       double acc = 0.0;
                       for (size_t oy = 0; oy < ho; ++oy) {
                         const long iy = static_cast<long>(oy * stride + ky) -
                                         static_cast<long>(pad);
                         if (iy < 0 || iy >= static_cast<long>(h)) continue;
                         for (size_t ox = 0; ox < wo; ++ox) {
                           const long ix = static_cast<long>(ox * stride + kx) -
                                           static_cast<long>(pad);
                           if (ix < 0 || ix >= static_cast<long>(ww)) continue;
                           acc += static_cast<double>(
                                      xi->data[(ci * h + iy) * ww + ix]) *
                                  g[(co * ho + oy) * wo + ox];
                         }
                       }
                       dw[((co * cin + ci) * kh + ky) * kw + kx] += acc;
                     }
                   }
                 }
               }
               for (size_t i = 0; i < dw.size(); ++i) {
                 wi->grad[i] += static_cast<float>(dw[i]);
               }
             }
             if (xi->requires_grad) {
               xi->ensure_grad();
               std::vector<double> dx(xi->data.size(), 0.0);
               for (size_t co = 0; co < cout; ++co) {
                 for (size_t ci = 0; ci < cin; ++ci) {
                   for (size_t oy = 0; oy < ho; ++oy) {
                     for (size_t ox = 0; ox < wo; ++ox) {
                       const double gv = g[(co * ho + oy) * wo + ox];
                       if (gv == 0.0) continue;
                       for (size_t ky = 0; ky < kh; ++ky) {
                         const long iy = static_cast<long>(oy * stride + ky) -
                                         static_cast<long>(pad);
                         if (iy < 0 || iy >= static_cast<long>(h)) continue;
                         for (size_t kx = 0; kx < kw; ++kx) {
                           const long ix = static_cast<long>(ox * stride + kx) -
                                           static_cast<long>(pad);
                           if (ix < 0 || ix >= static_cast<long>(ww)) continue;
                           dx[(ci * h + iy) * ww + ix] +=
                               gv * wi->data[((co * cin + ci) * kh + ky) * kw +
                                             kx];
                         }
                       }
                     }
                   }
                 }
               }
               for (size_t i = 0; i < dx.size(); ++i) {
                 xi->grad[i] += static_cast<float>(dx[i]);
               }
             }
           });
  }
  return Tensor(out);
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        size_t stride, size_t pad) {
  check_rank(x, 3, "conv_transpose2d");
  check_rank(w, 4, "conv_transpose2d");
  check_rank(b, 1, "conv_transpose2d");
  if (stride == 0) {
    throw std::invalid_argument("conv_transpose2d: stride must be >= 1");
  }
  const size_t cin = x.extent(0), h = x.extent(1), ww = x.extent(2);
  const size_t cout = w.extent(1), kh = w.extent(2), kw = w.extent(3);
  if (w.extent(0) != cin || b.extent(0) != cout) {
    throw std::invalid_argument("conv_transpose2d: weight/bias shape mismatch");
  }
  const long ho_l = static_cast<long>((h - 1) * stride + kh) -
                    2 * static_cast<long>(pad);
  const long wo_l = static_cast<long>((ww - 1) * stride + kw) -
                    2 * static_cast<long>(pad);
  if (ho_l <= 0 || wo_l <= 0) {
    throw std::invalid_argument("conv_transpose2d: empty output");
  }
  const size_t ho = static_cast<size_t>(ho_l), wo = static_cast<size_t>(wo_l);
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.impl();
  auto out = make_out({cout, ho, wo});
  const bool prec = precise_mode();
  std::vector<double> sx, sw, sb;
  const double* X = prec ? f64_view(xi, sx) : nullptr;
  const double* W = prec ? f64_view(wi, sw) : nullptr;
  const double* B = prec ? f64_view(bi, sb) : nullptr;
  std::vector<double> buf(cout * ho * wo, 0.0);
  for (size_t co = 0; co < cout; ++co) {
    const double bv = prec ? B[co] : static_cast<double>(bi->data[co]);
    for (size_t p = 0; p < ho * wo; ++p) buf[co * ho * wo + p] = bv;
  }
  for (size_t ci = 0; ci < cin; ++ci) {
    for (size_t co = 0; co < cout; ++co) {
      const size_t wbase = (ci * cout + co) * kh * kw;
      for (size_t iy = 0; iy < h; ++iy) {
        for (size_t ky = 0; ky < kh; ++ky) {
          const long oy = static_cast<long>(iy * stride + ky) -
                          static_cast<long>(pad);
          if (oy < 0 || oy >= static_cast<long>(ho)) continue;
          double* brow = buf.data() + (co * ho + oy) * wo;
          const size_t xrow = (ci * h + iy) * ww;
          const size_t wrow = wbase + ky * kw;
          for (size_t ix = 0; ix < ww; ++ix) {
            const double xv =
                prec ? X[xrow + ix] : static_cast<double>(xi->data[xrow + ix]);
            if (xv == 0.0) continue;
            const long ox0 = static_cast<long>(ix * stride) -
                             static_cast<long>(pad);
            for (size_t kx = 0; kx < kw; ++kx) {
              const long ox = ox0 + static_cast<long>(kx);
              if (ox < 0 || ox >= static_cast<long>(wo)) continue;
              brow[ox] += xv * (prec ? W[wrow + kx]
                                     : static_cast<double>(wi->data[wrow + kx]));
            }
          }
        }
      }
    }
  }
  if (prec) out->shadow = buf;
  for (size_t i = 0; i < buf.size(); ++i) {
    out->data[i] = static_cast<float>(buf[i]);
  }
  if (wants_grad({&x, &w, &b})) {
    TensorImpl* self = out.get();
    attach(out, {xi, wi, bi},
           [self, xi, wi, bi, cin, cout, h, ww, kh, kw, ho, wo, stride, pad]() {
             const auto& g = self->grad;
             if (bi->requires_grad) {
               bi->ensure_grad();
               for (size_t co = 0; co < cout; ++co) {
                 double acc = 0.0;
                 for (size_t p = 0; p < ho * wo; ++p) acc += g[co * ho * wo + p];
                 bi->grad[co] += static_cast<float>(acc);
               }
             }
             if (xi->requires_grad) {
               xi->ensure_grad();
               std::vector<double> dx(xi->data.size(), 0.0);
               for (size_t ci = 0; ci < cin; ++ci) {
                 for (size_t co = 0; co < cout; ++co) {
                   const float* wbase =
                       wi->data.data() + (ci * cout + co) * kh * kw;
                   for (size_t iy = 0; iy < h; ++iy) {
                     for (size_t ky = 0; ky < kh; ++ky) {
                       const long oy = static_cast<long>(iy * stride + ky) -
                                       static_cast<long>(pad);
                       if (oy < 0 || oy >= static_cast<long>(ho)) continue;
                       const float* grow = g.data() + (co * ho + oy) * wo;
                       const float* wrow = wbase + ky * kw;
                       for (size_t ix = 0; ix < ww; ++ix) {
                         const long ox0 = static_cast<long>(ix * stride) -
                                          static_cast<long>(pad);
                         double acc = 0.0;
                         for (size_t kx = 0; kx < kw; ++kx) {
                           const long ox = ox0 + static_cast<long>(kx);
                           if (ox < 0 || ox >= static_cast<long>(wo)) continue;
                           acc += static_cast<double>(grow[ox]) * wrow[kx];
                         }
                         dx[(ci * h + iy) * ww + ix] += acc;
                       }
                     }
                   }
                 }
               }
               for (size_t i = 0; i < dx.size(); ++i) {
                 xi->grad[i] += static_cast<float>(dx[i]);
               }
             }
             if (wi->requires_grad) {
               wi->ensure_grad();
               std::vector<double> dw(wi->data.size(), 0.0);
               for (size_t ci = 0; ci < cin; ++ci) {
                 for (size_t co = 0; co < cout; ++co) {
                   double* dwbase = dw.data() + (ci * cout + co) * kh * kw;
                   for (size_t iy = 0; iy < h; ++iy) {
                     for (size_t ky = 0; ky < kh; ++ky) {
                       const long oy = static_cast<long>(iy * stride + ky) -
                                       static_cast<long>(pad);
                       if (oy < 0 || oy >= static_cast<long>(ho)) continue;
                       const float* grow = g.data() + (co * ho + oy) * wo;
                       const float* xrow = xi->data.data() + (ci * h + iy) * ww;
                       for (size_t ix = 0; ix < ww; ++ix) {
                         const double xv = xrow[ix];
                         if (xv == 0.0) continue;
                         const long ox0 = static_cast<long>(ix * stride) -
                                          static_cast<long>(pad);
                         for (size_t kx = 0; kx < kw; ++kx) {
                           const long ox = ox0 + static_cast<long>(kx);
                           if (ox < 0 || ox >= static_cast<long>(wo)) continue;
                           dwbase[ky * kw + kx] += xv * grow[ox];
                         }
                       }
                     }
                   }
                 }
               }
               for (size_t i = 0; i < dw.size(); ++i) {
                 wi->grad[i] += static_cast<float>(dw[i]);
               }
             }
           });
  }
  return Tensor(out);
}

Tensor global_avg_pool(const Tensor& x) {
  check_rank(x, 3, "global_avg_pool");
  const size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  auto xi = x.impl();
  auto out = make_out({c});
  const bool prec = precise_mode();
  std::vector<double> sx;
  const double* X = prec ? f64_view(xi, sx) : nullptr;
  if (prec) out->shadow.resize(c);
  const double n = static_cast<double>(h * w);
  for (size_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (size_t p = 0; p < h * w; ++p) {
      acc += prec ? X[ci * h * w + p]
                  : static_cast<double>(xi->data[ci * h * w + p]);
    }
    const double m = acc / n;
    if (prec) out->shadow[ci] = m;
    out->data[ci] = static_cast<float>(m);
  }
  if (wants_grad({&x})) {
    TensorImpl* self = out.get();
    attach(out, {xi}, [self, xi, c, h, w]() {
      xi->ensure_grad();
      const double n2 = static_cast<double>(h * w);
      for (size_t ci = 0; ci < c; ++ci) {
        const float gv = static_cast<float>(self->grad[ci] / n2);
        for (size_t p = 0; p < h * w; ++p) xi->grad[ci * h * w + p] += gv;
      }
    });
  }
  return Tensor(out);
}

}  // namespace semcom
