#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dtjrd/tensor.hpp"

namespace dtjrd {

/// Catmull-Rom cubic convolution weight (a = -0.5) at distance x.
double cubic_kernel(double x);

/// Resizes an [H, W, D] grid to [new_h, new_w, D]; each channel independently.
/// Half-pixel aligned sampling, borders clamped. Not differentiable.
template <typename T>
Tensor<T> bicubic_resize_2d(const Tensor<T>& grid, std::size_t new_h, std::size_t new_w);

/// Bilinear resize of planar [C, H, W] samples to [C, new_h, new_w]; half-pixel
/// aligned, borders clamped.
std::vector<float> bilinear_resize_planar(std::span<const float> src, std::size_t channels,
                                          std::size_t h, std::size_t w, std::size_t new_h,
                                          std::size_t new_w);

}  // namespace dtjrd
