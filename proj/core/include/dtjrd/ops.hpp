#pragma once

#include <vector>

#include "dtjrd/tensor.hpp"

// Differentiable primitives. Every op checks its output for NaN/Inf and
// throws NumericError naming the op; shape violations throw DimensionError.
namespace dtjrd::ops {

// Elementwise with numpy-style broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);

/// a[..., M, K] x b[K, N] (shared) or b[..., K, N] (same leading dims).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[..., D] x w[D, E] + bias[E].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& perm);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);  // swaps the last two axes
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape);

template <typename T> Tensor<T> sum(const Tensor<T>& a);  // -> scalar
template <typename T> Tensor<T> mean(const Tensor<T>& a, std::size_t axis);

// Last-axis reductions.
template <typename T> Tensor<T> softmax(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& a);

/// Exact form 0.5 x (1 + erf(x / sqrt 2)).
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

inline constexpr double kLayerNormEps = 1e-6;

/// Normalizes over the last axis, then applies scale[D] and shift[D].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                     double eps = kLayerNormEps);

}  // namespace dtjrd::ops

namespace dtjrd {

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return ops::add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return ops::sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return ops::mul(a, b); }

}  // namespace dtjrd
