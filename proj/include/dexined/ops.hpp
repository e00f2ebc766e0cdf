#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/kernels/gemm.hpp"
#include "dexined/kernels/im2col.hpp"
#include "dexined/tape.hpp"
#include "dexined/tensor.hpp"

// Differentiable primitives. Every op takes an optional tape as its first
// argument; with a null tape (or a tape that is not recording) the op is a
// plain forward computation.

namespace dexined::ops {

namespace detail {

template <class T>
void accumulate(const Tensor<T>& dst, std::span<const T> src) {
  if (!dst.requires_grad()) return;
  auto g = dst.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

template <class T>
std::vector<T>& scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

template <class T>
std::vector<T>& scratch2(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

// When non-null, piecewise-linear ops fold every branch they take into this
// digest. Two evaluations with equal digests lie on the same linear piece.
inline thread_local std::uint64_t* branch_digest = nullptr;

inline void fold_branch(std::uint64_t& digest, std::uint64_t branch) {
  digest = (digest ^ branch) * 0x100000001b3ULL;
}

inline std::string shapes_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str();
}

}  // namespace detail

// 2-D cross-correlation. weight is [out x in x k x k], bias (optional) [1 x out x 1 x 1].
template <class T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw ShapeError(detail::shapes_msg("conv2d (input vs weight)", xs, ws));
  if (ws.h % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, weight " + ws.str());
  if (bias.defined() && bias.numel() != ws.n)
    throw ShapeError(detail::shapes_msg("conv2d (weight vs bias)", ws, bias.shape()));
  if (xs.h + 2 * padding < ws.h || xs.w + 2 * padding < ws.w)
    throw ShapeError(detail::shapes_msg("conv2d (input smaller than kernel)", xs, ws));

  const kernels::Window g{xs.c, xs.h, xs.w, ws.h, stride, padding};
  const Shape os{xs.n, ws.n, g.out_h(), g.out_w()};
  Tensor<T> out(os);
  const std::size_t rows = g.rows();
  const std::size_t cols = g.cols();
  const bool pointwise = ws.h == 1 && stride == 1 && padding == 0;

  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* x = input.ptr() + n * xs.item();
    const T* col = x;
    if (!pointwise) {
      auto& buf = detail::scratch<T>(rows * cols);
      kernels::im2col(x, g, buf.data());
      col = buf.data();
    }
    T* y = out.ptr() + n * os.item();
    kernels::gemm<T>(false, false, ws.n, cols, rows, weight.ptr(), rows, col, cols, false, y, cols);
    if (bias.defined())
      for (std::size_t o = 0; o < ws.n; ++o) {
        const T b = bias[o];
        T* plane = y + o * cols;
        for (std::size_t p = 0; p < cols; ++p) plane[p] += b;
      }
  }

  dexined::detail::finish(tape, "conv2d", out, {&input, &weight, &bias},
                          [input, weight, bias, out, g, pointwise]() mutable {
    const Shape xs = input.shape();
    const Shape os = out.shape();
    const std::size_t rows = g.rows();
    const std::size_t cols = g.cols();
    auto dy_all = out.grad();
    if (bias.defined() && bias.requires_grad()) {
      auto db = bias.grad();
      for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t o = 0; o < os.c; ++o) {
          const T* plane = dy_all.data() + n * os.item() + o * cols;
          T s = 0;
          for (std::size_t p = 0; p < cols; ++p) s += plane[p];
          db[o] += s;
        }
    }
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* dy = dy_all.data() + n * os.item();
      const T* x = input.ptr() + n * xs.item();
      if (weight.requires_grad()) {
        const T* col = x;
        if (!pointwise) {
          auto& buf = detail::scratch<T>(rows * cols);
          kernels::im2col(x, g, buf.data());
          col = buf.data();
        }
        kernels::gemm<T>(false, true, os.c, rows, cols, dy, cols, col, cols, true,
                         weight.grad().data(), rows);
      }
      if (input.requires_grad()) {
        T* dx = input.grad().data() + n * xs.item();
        if (pointwise) {
          kernels::gemm<T>(true, false, rows, cols, os.c, weight.ptr(), rows, dy, cols, true, dx,
                           cols);
        } else {
          auto& dcol = detail::scratch2<T>(rows * cols);
          kernels::gemm<T>(true, false, rows, cols, os.c, weight.ptr(), rows, dy, cols, false,
                           dcol.data(), cols);
          kernels::col2im(dcol.data(), g, dx);
        }
      }
    }
  });
  return out;
}

// Output extent of an exact-multiple transposed convolution, or 0 when the
// kernel/stride pair cannot produce exactly in * stride.
inline std::size_t transposed_extent(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (kernel < stride || (kernel - stride) % 2 != 0) return 0;
  const std::size_t pad = (kernel - stride) / 2;
  return (in - 1) * stride + kernel - 2 * pad;
}

// Transposed convolution (adjoint of a strided conv2d). weight is
// [in x out x k x k]; padding is derived as (k - stride) / 2 so the output
// extent is exactly input * stride.
template <class T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w)
    throw ShapeError(detail::shapes_msg("conv_transpose2d (input vs weight)", xs, ws));
  const std::size_t k = ws.h;
  if (k < stride || (k - stride) % 2 != 0) {
    const std::size_t pad = k > stride ? (k - stride) / 2 : 0;
    const std::size_t computed = (xs.h - 1) * stride + k - std::min(k, 2 * pad);
    throw ShapeError("conv_transpose2d: kernel " + std::to_string(k) + " with stride " +
                     std::to_string(stride) + " yields extent " + std::to_string(computed) +
                     ", requested " + std::to_string(xs.h * stride));
  }
  if (bias.defined() && bias.numel() != ws.c)
    throw ShapeError(detail::shapes_msg("conv_transpose2d (weight vs bias)", ws, bias.shape()));

  const std::size_t pad = (k - stride) / 2;
  const Shape os{xs.n, ws.c, xs.h * stride, xs.w * stride};
  // Geometry of the equivalent forward conv: output-sized image back to input.
  const kernels::Window g{ws.c, os.h, os.w, k, stride, pad};
  const std::size_t rows = g.rows();  // out * k * k
  const std::size_t cols = xs.plane();

  Tensor<T> out(os);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* x = input.ptr() + n * xs.item();
    auto& col = detail::scratch<T>(rows * cols);
    kernels::gemm<T>(true, false, rows, cols, xs.c, weight.ptr(), rows, x, cols, false, col.data(),
                     cols);
    T* y = out.ptr() + n * os.item();
    kernels::col2im(col.data(), g, y);
    if (bias.defined())
      for (std::size_t o = 0; o < os.c; ++o) {
        const T b = bias[o];
        T* plane = y + o * os.plane();
        for (std::size_t p = 0; p < os.plane(); ++p) plane[p] += b;
      }
  }

  dexined::detail::finish(tape, "conv_transpose2d", out, {&input, &weight, &bias},
                          [input, weight, bias, out, g, rows, cols]() mutable {
    const Shape xs = input.shape();
    const Shape os = out.shape();
    auto dy_all = out.grad();
    if (bias.defined() && bias.requires_grad()) {
      auto db = bias.grad();
      for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t o = 0; o < os.c; ++o) {
          const T* plane = dy_all.data() + n * os.item() + o * os.plane();
          T s = 0;
          for (std::size_t p = 0; p < os.plane(); ++p) s += plane[p];
          db[o] += s;
        }
    }
    if (!input.requires_grad() && !weight.requires_grad()) return;
    for (std::size_t n = 0; n < xs.n; ++n) {
      auto& dcol = detail::scratch<T>(rows * cols);
      kernels::im2col(dy_all.data() + n * os.item(), g, dcol.data());
      if (input.requires_grad())
        kernels::gemm<T>(false, false, xs.c, cols, rows, weight.ptr(), rows, dcol.data(), cols,
                         true, input.grad().data() + n * xs.item(), cols);
      if (weight.requires_grad())
        kernels::gemm<T>(false, true, xs.c, rows, cols, input.ptr() + n * xs.item(), cols,
                         dcol.data(), cols, true, weight.grad().data(), rows);
    }
  });
  return out;
}

enum class Mode { train, eval };

// Running statistics of a batch-norm layer.
template <class T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  std::size_t batches_tracked = 0;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(Tensor<T>::vector(channels, T(0))),
        running_var(Tensor<T>::vector(channels, T(1))) {}
};

template <class T>
Tensor<T> batchnorm2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& gamma,
                      const Tensor<T>& beta, BatchNormStats<T>& stats, Mode mode,
                      double eps = 1e-5, double momentum = 0.1) {
  const Shape xs = input.shape();
  if (gamma.numel() != xs.c || beta.numel() != xs.c)
    throw ShapeError(detail::shapes_msg("batchnorm2d (input vs gamma)", xs, gamma.shape()));
  if (xs.plane() == 0 || xs.n == 0)
    throw ShapeError("batchnorm2d: zero-size extent in input " + xs.str());
  if (!(eps > 0)) throw ShapeError("batchnorm2d: eps must be positive");
  if (mode == Mode::eval && stats.batches_tracked == 0)
    throw Error("batchnorm2d: eval mode requested before any running statistics were recorded");

  const std::size_t C = xs.c;
  const std::size_t HW = xs.plane();
  const double count = static_cast<double>(xs.n * HW);
  std::vector<T> mean(C), invstd(C);

  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* p = input.ptr() + n * xs.item() + c * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / count;
      double v = 0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* p = input.ptr() + n * xs.item() + c * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          v += d * d;
        }
      }
      const double var = v / count;
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? v / (count - 1) : var;
      stats.running_mean[c] =
          static_cast<T>((1 - momentum) * stats.running_mean[c] + momentum * mu);
      stats.running_var[c] =
          static_cast<T>((1 - momentum) * stats.running_var[c] + momentum * unbiased);
    }
    ++stats.batches_tracked;
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.running_mean[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.running_var[c]) + eps));
    }
  }

  Tensor<T> out(xs);
  Tensor<T> xhat(xs);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = input.ptr() + n * xs.item() + c * HW;
      T* h = xhat.ptr() + n * xs.item() + c * HW;
      T* y = out.ptr() + n * xs.item() + c * HW;
      const T g = gamma[c], b = beta[c], m = mean[c], is = invstd[c];
      for (std::size_t i = 0; i < HW; ++i) {
        h[i] = (p[i] - m) * is;
        y[i] = g * h[i] + b;
      }
    }

  dexined::detail::finish(tape, "batchnorm2d", out, {&input, &gamma, &beta},
                          [input, gamma, beta, out, xhat, invstd, mode, count]() mutable {
    const Shape xs = input.shape();
    const std::size_t C = xs.c;
    const std::size_t HW = xs.plane();
    auto dy = out.grad();
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const std::size_t off = n * xs.item() + c * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat[off + i];
        }
      }
      if (gamma.requires_grad()) gamma.grad()[c] += static_cast<T>(sum_dy_xhat);
      if (beta.requires_grad()) beta.grad()[c] += static_cast<T>(sum_dy);
      if (!input.requires_grad()) continue;
      auto dx = input.grad();
      const double g = gamma[c];
      const double is = invstd[c];
      for (std::size_t n = 0; n < xs.n; ++n) {
        const std::size_t off = n * xs.item() + c * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          if (mode == Mode::train)
            dx[off + i] += static_cast<T>(
                g * is * (dy[off + i] - sum_dy / count - xhat[off + i] * sum_dy_xhat / count));
          else
            dx[off + i] += static_cast<T>(g * is * dy[off + i]);
        }
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const std::size_t n = input.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  if (std::uint64_t* d = detail::branch_digest)
    for (std::size_t i = 0; i < n; ++i) detail::fold_branch(*d, input[i] > T(0));
  dexined::detail::finish(tape, "relu", out, {&input}, [input, out]() mutable {
    auto dy = out.grad();
    auto dx = input.grad();
    // subgradient at exactly 0 is 0
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (input[i] > T(0)) dx[i] += dy[i];
  });
  return out;
}

// Evaluated in double so 32-bit results are rounded once.
template <class T>
T sigmoid_scalar(T x) {
  const double v = static_cast<double>(x);
  if (v >= 0) return static_cast<T>(1.0 / (1.0 + std::exp(-v)));
  const double e = std::exp(v);
  return static_cast<T>(e / (1.0 + e));
}

template <class T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const std::size_t n = input.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_scalar(input[i]);
  dexined::detail::finish(tape, "sigmoid", out, {&input}, [input, out]() mutable {
    auto dy = out.grad();
    auto dx = input.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * out[i] * (T(1) - out[i]);
  });
  return out;
}

template <class T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& input, std::size_t kernel = 3,
                    std::size_t stride = 2, std::size_t padding = 1) {
  const Shape xs = input.shape();
  if (xs.h < 2 || xs.w < 2)
    throw ShapeError("maxpool2d: spatial extents must be at least 2, got " + xs.str());
  if (stride == 0) throw ShapeError("maxpool2d: stride must be positive");
  const kernels::Window g{1, xs.h, xs.w, kernel, stride, padding};
  const Shape os{xs.n, xs.c, g.out_h(), g.out_w()};
  Tensor<T> out(os);
  std::vector<std::size_t> argmax(os.numel());
  const auto H = static_cast<std::ptrdiff_t>(xs.h);
  const auto W = static_cast<std::ptrdiff_t>(xs.w);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* plane = input.ptr() + nc * xs.plane();
    for (std::size_t y = 0; y < os.h; ++y)
      for (std::size_t x = 0; x < os.w; ++x, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + ki) -
                                    static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= H) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride + kj) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= W) continue;
            const std::size_t idx = static_cast<std::size_t>(iy * W + ix);
            // first maximum in scan order wins ties
            if (!found || plane[idx] > best) {
              best = plane[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        out[o] = best;
        argmax[o] = nc * xs.plane() + best_idx;
      }
  }
  if (std::uint64_t* d = detail::branch_digest)
    for (std::size_t a : argmax) detail::fold_branch(*d, a);
  dexined::detail::finish(tape, "maxpool2d", out, {&input}, [input, out, argmax]() mutable {
    auto dy = out.grad();
    auto dx = input.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  });
  return out;
}

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("add: operand 1 has shape " + b.shape().str() + ", operand 0 has " +
                     a.shape().str());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  dexined::detail::finish(tape, "add", out, {&a, &b}, [a, b, out]() mutable {
    auto dy = out.grad();
    detail::accumulate<T>(a, dy);
    detail::accumulate<T>(b, dy);
  });
  return out;
}

template <class T>
Tensor<T> scalar_mul(Tape<T>* tape, const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * s;
  dexined::detail::finish(tape, "scalar_mul", out, {&a}, [a, out, s]() mutable {
    auto dy = out.grad();
    auto dx = a.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * s;
  });
  return out;
}

template <class T>
Tensor<T> average(Tape<T>* tape, std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("average: empty operand list");
  const Shape s = items.front().shape();
  for (std::size_t i = 1; i < items.size(); ++i)
    if (!(items[i].shape() == s))
      throw ShapeError("average: operand " + std::to_string(i) + " has shape " +
                       items[i].shape().str() + ", expected " + s.str());
  const T scale = T(1) / static_cast<T>(items.size());
  Tensor<T> out(s);
  for (const auto& t : items)
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += t[i];
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= scale;

  bool any = false;
  for (const auto& t : items) any = any || t.requires_grad();
  if (tape && tape->checks_finite() && !out.all_finite())
    throw NumericError("non-finite output produced by op 'average'");
  if (tape && tape->recording() && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> held(items.begin(), items.end());
    tape->push("average", [held, out, scale]() mutable {
      auto dy = out.grad();
      for (auto& t : held) {
        if (!t.requires_grad()) continue;
        auto dx = t.grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * scale;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> concat_channels(Tape<T>* tape, std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("concat_channels: empty operand list");
  const Shape s0 = items.front().shape();
  std::size_t channels = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Shape si = items[i].shape();
    if (si.n != s0.n || si.h != s0.h || si.w != s0.w)
      throw ShapeError("concat_channels: operand " + std::to_string(i) + " has shape " +
                       si.str() + ", incompatible with " + s0.str());
    channels += si.c;
  }
  const Shape os{s0.n, channels, s0.h, s0.w};
  Tensor<T> out(os);
  std::size_t c0 = 0;
  for (const auto& t : items) {
    const Shape ts = t.shape();
    for (std::size_t n = 0; n < os.n; ++n)
      std::copy_n(t.ptr() + n * ts.item(), ts.item(), out.ptr() + n * os.item() + c0 * os.plane());
    c0 += ts.c;
  }
  bool any = false;
  for (const auto& t : items) any = any || t.requires_grad();
  if (tape && tape->checks_finite() && !out.all_finite())
    throw NumericError("non-finite output produced by op 'concat_channels'");
  if (tape && tape->recording() && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> held(items.begin(), items.end());
    tape->push("concat_channels", [held, out]() mutable {
      const Shape os = out.shape();
      auto dy = out.grad();
      std::size_t c0 = 0;
      for (auto& t : held) {
        const Shape ts = t.shape();
        if (t.requires_grad()) {
          auto dx = t.grad();
          for (std::size_t n = 0; n < os.n; ++n) {
            const T* src = dy.data() + n * os.item() + c0 * os.plane();
            T* dst = dx.data() + n * ts.item();
            for (std::size_t i = 0; i < ts.item(); ++i) dst[i] += src[i];
          }
        }
        c0 += ts.c;
      }
    });
  }
  return out;
}

// Spatial window [top, top + h) x [left, left + w).
template <class T>
Tensor<T> crop(Tape<T>* tape, const Tensor<T>& input, std::size_t top, std::size_t left,
               std::size_t h, std::size_t w) {
  const Shape xs = input.shape();
  if (top + h > xs.h || left + w > xs.w)
    throw ShapeError("crop: window exceeds input " + xs.str());
  const Shape os{xs.n, xs.c, h, w};
  Tensor<T> out(os);
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(input.ptr() + nc * xs.plane() + (top + y) * xs.w + left, w,
                  out.ptr() + nc * os.plane() + y * w);
  dexined::detail::finish(tape, "crop", out, {&input}, [input, out, top, left]() mutable {
    const Shape xs = input.shape();
    const Shape os = out.shape();
    auto dy = out.grad();
    auto dx = input.grad();
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc)
      for (std::size_t y = 0; y < os.h; ++y)
        for (std::size_t x = 0; x < os.w; ++x)
          dx[nc * xs.plane() + (top + y) * xs.w + left + x] += dy[nc * os.plane() + y * os.w + x];
  });
  return out;
}

// Scalar sum(input * weights); the weights are constants.
template <class T>
Tensor<T> weighted_sum(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weights) {
  if (!(input.shape() == weights.shape()))
    throw ShapeError(detail::shapes_msg("weighted_sum", input.shape(), weights.shape()));
  T s = 0;
  for (std::size_t i = 0; i < input.numel(); ++i) s += input[i] * weights[i];
  Tensor<T> out = Tensor<T>::scalar(s);
  dexined::detail::finish(tape, "weighted_sum", out, {&input}, [input, weights, out]() mutable {
    const T dy = out.grad()[0];
    auto dx = input.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy * weights[i];
  });
  return out;
}

template <class T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& input) {
  return weighted_sum(tape, input, Tensor<T>(input.shape(), T(1)));
}

// Reflect-pads the bottom/right edges up to (h, w). Not differentiable; used
// on raw network inputs only.
template <class T>
Tensor<T> reflect_pad(const Tensor<T>& input, std::size_t h, std::size_t w) {
  const Shape xs = input.shape();
  if (h < xs.h || w < xs.w) throw ShapeError("reflect_pad: target smaller than " + xs.str());
  if ((h > xs.h && h - xs.h >= xs.h) || (w > xs.w && w - xs.w >= xs.w))
    throw ShapeError("reflect_pad: padding exceeds input extent " + xs.str());
  if (h == xs.h && w == xs.w) return input;
  const Shape os{xs.n, xs.c, h, w};
  Tensor<T> out(os);
  auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * n - 2 - i; };
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[nc * os.plane() + y * w + x] =
            input[nc * xs.plane() + reflect(y, xs.h) * xs.w + reflect(x, xs.w)];
  return out;
}

}  // namespace dexined::ops
