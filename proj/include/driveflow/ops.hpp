#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "driveflow/tensor.hpp"

// Differentiable operations. Each one computes its forward value eagerly and,
// when a tape is active and some input requires a gradient, records a backward
// rule on that tape.
namespace driveflow {

/// [m x k] * [k x n] -> [m x n]. Fixed per-row summation order: permuting the
/// rows of `a` permutes the output rows bit-for-bit.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid cross-correlation of a [C x H x W] input with [F x C x kh x kw]
/// kernels, producing [F x H' x W'] with H' = (H - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride);

/// Per-window maximum over [C x H x W]. The gradient goes to the first
/// row-major argmax of each window.
Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride);

/// Column-wise maximum of an [N x D] point-feature matrix, giving [D].
/// Order-invariant in the rows; the gradient goes to the first argmax.
Tensor global_max_over_points(const Tensor& x);

/// max(0, x); subgradient 0 at the kink.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Elementwise square root; the gradient at exactly 0 is taken as 0.
Tensor sqrt(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Adds `bias` (length = last dim of x) to every row of x.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Adds `bias[c]` to every element of channel c (axis 0) of x.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);
/// Single element `index` of x (flat row-major index) as a [1] tensor.
Tensor take(const Tensor& x, std::size_t index);
/// Concatenation along axis 0; trailing dims must agree.
Tensor concat(std::span<const Tensor> parts);
inline Tensor concat(std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v));
}

}  // namespace driveflow
