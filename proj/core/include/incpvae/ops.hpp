#pragma once

#include <cstddef>
#include <optional>

#include "incpvae/tensor.hpp"

namespace incpvae {

inline constexpr float kDefaultLeakySlope = 0.01f;

// [m x k] * [k x n] -> [m x n]. Dot products accumulate in double.
Tensor matmul(const Tensor& a, const Tensor& b);

// Fully connected layer: x [n x in] * w [in x out] + bias [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Elementwise binary ops. Operands must have equal shapes, or one of them
// must be rank 0 (scalar-with-tensor). No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor mul(const Tensor& a, float b);

Tensor negate(const Tensor& t);
Tensor square(const Tensor& t);
Tensor exp(const Tensor& t);
// Throws DomainError on any non-positive element.
Tensor log(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor softplus(const Tensor& t);
Tensor leaky_relu(const Tensor& t, float slope = kDefaultLeakySlope);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& t) { return negate(t); }

// Full reductions return a rank-0 tensor; axis reductions drop the axis.
// Accumulation is in double.
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t, std::size_t axis);

Tensor reshape(const Tensor& t, Shape shape);
// Columns [begin, end) of a rank-2 tensor.
Tensor slice_columns(const Tensor& t, std::size_t begin, std::size_t end);

// floor((in + 2 * padding - kernel) / stride) + 1; DimensionError when the
// result would be non-positive.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);
// (in - 1) * stride - 2 * padding + kernel + output_padding.
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding);

// Cross-correlation. input [N x C x H x W], weight [O x C x kh x kw],
// bias [O] (optional).
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding);

// Adjoint of conv2d with respect to its input. input [N x C x H x W],
// weight [C x O x kh x kw], bias [O] (optional).
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight,
                        const std::optional<Tensor>& bias, std::size_t stride,
                        std::size_t padding, std::size_t output_padding = 0);

}  // namespace incpvae
