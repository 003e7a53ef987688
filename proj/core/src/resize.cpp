#include "dtjrd/resize.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dtjrd {

namespace {

constexpr double kCubicA = -0.5;

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> cubic_taps(std::size_t src_len, std::size_t dst_len) {
  const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
  const auto last = static_cast<std::ptrdiff_t>(src_len) - 1;
  std::vector<Taps> taps(dst_len);
  for (std::size_t o = 0; o < dst_len; ++o) {
    const double pos = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(pos);
    const double t = pos - base;
    for (int k = 0; k < 4; ++k) {
      const auto i = static_cast<std::ptrdiff_t>(base) - 1 + k;
      taps[o].index[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, last));
      taps[o].weight[k] = cubic_kernel(t - static_cast<double>(k - 1));
    }
  }
  return taps;
}

struct LinearTap {
  std::size_t i0, i1;
  double w1;
};

std::vector<LinearTap> linear_taps(std::size_t src_len, std::size_t dst_len) {
  const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
  std::vector<LinearTap> taps(dst_len);
  for (std::size_t o = 0; o < dst_len; ++o) {
    double pos = (static_cast<double>(o) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src_len - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, src_len - 1);
    taps[o] = {i0, i1, pos - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

double cubic_kernel(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((kCubicA + 2.0) * ax - (kCubicA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kCubicA * ax - 5.0 * kCubicA) * ax + 8.0 * kCubicA) * ax - 4.0 * kCubicA;
  return 0.0;
}

template <typename T>
Tensor<T> bicubic_resize_2d(const Tensor<T>& grid, std::size_t new_h, std::size_t new_w) {
  if (grid.rank() != 3) throw DimensionError("bicubic_resize_2d: expected [H,W,D], got " + shape_str(grid.shape()));
  if (new_h < 1 || new_w < 1) throw ContractError("bicubic_resize_2d: target size must be >= 1");
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2);
  if (h < 2 || w < 2) throw ContractError("bicubic_resize_2d: source grid must be at least 2x2");

  const auto ty = cubic_taps(h, new_h);
  const auto tx = cubic_taps(w, new_w);
  auto src = grid.data();

  // Horizontal pass into [H, new_w, D], then vertical.
  std::vector<double> mid(h * new_w * d, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < new_w; ++x) {
      double* dst = mid.data() + (y * new_w + x) * d;
      for (int k = 0; k < 4; ++k) {
        const T* s = src.data() + (y * w + tx[x].index[k]) * d;
        const double wk = tx[x].weight[k];
        for (std::size_t c = 0; c < d; ++c) dst[c] += wk * static_cast<double>(s[c]);
      }
    }
  }
  std::vector<T> out(new_h * new_w * d);
  std::vector<double> acc(d);
  for (std::size_t y = 0; y < new_h; ++y) {
    for (std::size_t x = 0; x < new_w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = 0; k < 4; ++k) {
        const double* s = mid.data() + (ty[y].index[k] * new_w + x) * d;
        const double wk = ty[y].weight[k];
        for (std::size_t c = 0; c < d; ++c) acc[c] += wk * s[c];
      }
      T* dst = out.data() + (y * new_w + x) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<T>(acc[c]);
    }
  }
  return Tensor<T>(Shape{new_h, new_w, d}, std::move(out));
}

template Tensor<float> bicubic_resize_2d(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> bicubic_resize_2d(const Tensor<double>&, std::size_t, std::size_t);

std::vector<float> bilinear_resize_planar(std::span<const float> src, std::size_t channels,
                                          std::size_t h, std::size_t w, std::size_t new_h,
                                          std::size_t new_w) {
  if (h == 0 || w == 0 || new_h == 0 || new_w == 0) throw ContractError("bilinear_resize: empty size");
  if (src.size() != channels * h * w) throw DimensionError("bilinear_resize: buffer size mismatch");
  const auto ty = linear_taps(h, new_h);
  const auto tx = linear_taps(w, new_w);
  std::vector<float> out(channels * new_h * new_w);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* plane = src.data() + c * h * w;
    float* dst = out.data() + c * new_h * new_w;
    for (std::size_t y = 0; y < new_h; ++y) {
      const float* r0 = plane + ty[y].i0 * w;
      const float* r1 = plane + ty[y].i1 * w;
      const double wy = ty[y].w1;
      for (std::size_t x = 0; x < new_w; ++x) {
        const double wx = tx[x].w1;
        const double top = r0[tx[x].i0] * (1.0 - wx) + r0[tx[x].i1] * wx;
        const double bot = r1[tx[x].i0] * (1.0 - wx) + r1[tx[x].i1] * wx;
        dst[y * new_w + x] = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

}  // namespace dtjrd
