#pragma once

#include "semcom/tensor.hpp"

namespace semcom {

// Differentiable operations over Tensor. All reductions accumulate in double
// and store float32 results. Shapes are validated eagerly; mismatches throw
// std::invalid_argument.

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- shape & layout ----
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& a);  // 2-D
Tensor slice_rows(const Tensor& a, size_t row0, size_t nrows);
Tensor slice_cols(const Tensor& a, size_t col0, size_t ncols);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k)x(k,n)
// m (R,C) plus bias (R) broadcast over columns.
Tensor add_col_bias(const Tensor& m, const Tensor& bias);

// ---- normalization & losses ----
// Normalizes each column of x (R,C) over its R features; gain/bias are (R).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = 1e-5f);
// Max-subtracted softmax along `axis`; every slice sums to 1.
Tensor softmax(const Tensor& x, size_t axis);
// -log softmax(logits)[target]; logits is a rank-1 tensor of class scores.
Tensor cross_entropy(const Tensor& logits, size_t target);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Squared error between x and xhat (C,H,W), restricted to pixels where the
// (H,W) mask is nonzero, divided by C * popcount(mask). Zero for an empty
// mask. Differentiable in x and xhat.
Tensor masked_mse(const Tensor& x, const Tensor& xhat, const Tensor& mask);

// ---- convolutions (single image, no batch axis) ----
// x (Cin,H,W), w (Cout,Cin,kh,kw), b (Cout).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride,
              size_t pad);
// x (Cin,H,W), w (Cin,Cout,kh,kw), b (Cout); output spatial size
// (H-1)*stride - 2*pad + kh.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        size_t stride, size_t pad);
// x (C,H,W) -> (C), mean over the spatial plane.
Tensor global_avg_pool(const Tensor& x);

}  // namespace semcom
