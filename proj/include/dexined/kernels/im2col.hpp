#pragma once

#include <algorithm>
#include <cstddef>

namespace dexined::kernels {

// Geometry of a square-kernel sliding window over one image plane.
struct Window {
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;

  constexpr std::size_t out_h() const { return (height + 2 * padding - kernel) / stride + 1; }
  constexpr std::size_t out_w() const { return (width + 2 * padding - kernel) / stride + 1; }
  constexpr std::size_t rows() const { return channels * kernel * kernel; }
  constexpr std::size_t cols() const { return out_h() * out_w(); }
};

// image [C x H x W] -> col [(C*k*k) x (Ho*Wo)]; out-of-bounds taps read 0.
template <class T>
void im2col(const T* image, const Window& g, T* col) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * s - pad + static_cast<std::ptrdiff_t>(ki);
          T* dst = col + y * ow;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst, ow, T(0));
            continue;
          }
          const T* row = plane + iy * W;
          const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(kj) - pad;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) * s + x0;
            dst[x] = (ix >= 0 && ix < W) ? row[ix] : T(0);
          }
        }
        col += oh * ow;
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back into image (which is not cleared).
template <class T>
void col2im(const T* col, const Window& g, T* image) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * s - pad + static_cast<std::ptrdiff_t>(ki);
          if (iy < 0 || iy >= H) continue;
          const T* src = col + y * ow;
          T* row = plane + iy * W;
          const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(kj) - pad;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) * s + x0;
            if (ix >= 0 && ix < W) row[ix] += src[x];
          }
        }
        col += oh * ow;
      }
    }
  }
}

}  // namespace dexined::kernels
