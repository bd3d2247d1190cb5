#pragma once

#include <vector>

#include "selb/tensor.hpp"

namespace selb {

// Elementwise binary ops with right-aligned broadcasting (a dimension must
// match or be 1; missing leading dimensions broadcast). Shape mismatches
// raise shape_mismatch naming the op and both shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // domain error on zero divisor

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

// Elementwise unary ops.
Tensor neg(const Tensor& x);
inline Tensor operator-(const Tensor& x) { return neg(x); }
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // domain error on non-positive entries
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);  // log(1 + e^x), numerically stable
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor lgamma(const Tensor& x);   // x > 0
Tensor digamma(const Tensor& x);  // x > 0

// Matrix product of two rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

// 2-D convolution, stride 1. x: (N, Cin, H, W); w: (Cout, Cin, k, k);
// bias: (Cout). Zero padding of `padding` pixels on each border.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t padding);

// 2x2 max-pool, stride 2, on (N, C, H, W); odd trailing rows/cols dropped.
Tensor maxpool2x2(const Tensor& x);

// Same data, new shape (sizes must agree).
Tensor reshape(const Tensor& x, const Shape& shape);
// Collapse all but the leading (batch) dimension.
Tensor flatten_batch(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim);

// Row-wise (last axis) softmax / log-softmax with max-subtraction.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// Columns [begin, end) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);

// Concatenate along `axis`; all other dimensions must match.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// log(max(|det m|, floor)) for a square rank-2 tensor. When the determinant
// magnitude is at or below the floor the output is the clamped constant, the
// gradient is zero, and *floored (if given) is set.
Tensor log_abs_det(const Tensor& m, double floor, bool* floored = nullptr);

namespace detail {
// Shared helper for ops: builds the output node, wiring parents/backprop
// only when recording is on and some input needs gradients.
Tensor make_op(const char* op, Shape shape, std::vector<double> data,
               const std::vector<Tensor>& inputs,
               std::function<void(TensorNode&)> backprop);
}  // namespace detail

}  // namespace selb
