#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "unisoma/tensor.hpp"

// Differentiable primitives. Each op computes its value eagerly and, when any
// input is tracked, records its backward rule on that input's tape.

namespace unisoma {

/// Batched matrix product: (…×m×k)·(…×k×n) with numpy-style broadcasting of
/// the leading dimensions.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

// Elementwise arithmetic with numpy broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor gelu(const Tensor& a);

/// Magnitude floored at `eps` with the sign kept (zero maps to +eps). The
/// floored entries are constants for differentiation.
Tensor sign_floor(const Tensor& a, double eps);

/// Sum of all elements, as a rank-0 tensor.
Tensor sum(const Tensor& a);
/// Sum along `axis`, which is removed from the shape.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);

/// Normalises over the last axis then applies per-channel scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps = 1e-5);

/// Rows of a matrix picked by index; repeated indices are allowed.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

}  // namespace unisoma
