#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <type_traits>
#include <vector>

namespace dexined::kernels {

// Packed, register-blocked matrix multiply for row-major operands:
//
//   C[M x N] = beta * C + A[M x K] * B[K x N]     (beta is 0 or 1)
//
// Operands may be stored transposed (trans_a / trans_b), in which case the
// leading dimension refers to the stored layout. The inner tile is written
// with GCC vector extensions so the same source maps to AVX-512, AVX2 or SSE
// depending on -march.

namespace detail {

template <class T>
struct tile_traits {
  static constexpr std::size_t lanes = 64 / sizeof(T);
  using vec __attribute__((vector_size(64))) = T;
  static constexpr std::size_t mr = 6;
  static constexpr std::size_t nr = 2 * lanes;
  static constexpr std::size_t kc = 256;
  static constexpr std::size_t mc = 96;
  static constexpr std::size_t nc = 2048;
};

// A block (mc x kc) -> panels of mr rows, k-major inside each panel.
template <class T>
void pack_a(const T* a, std::size_t lda, bool trans, std::size_t row0, std::size_t rows,
            std::size_t k0, std::size_t depth, T* out) {
  constexpr std::size_t mr = tile_traits<T>::mr;
  for (std::size_t p = 0; p < rows; p += mr) {
    const std::size_t h = std::min(mr, rows - p);
    for (std::size_t k = 0; k < depth; ++k) {
      for (std::size_t r = 0; r < mr; ++r) {
        T v = T(0);
        if (r < h) {
          const std::size_t i = row0 + p + r;
          const std::size_t kk = k0 + k;
          v = trans ? a[kk * lda + i] : a[i * lda + kk];
        }
        *out++ = v;
      }
    }
  }
}

// B block (kc x nc) -> panels of nr columns, k-major inside each panel.
template <class T>
void pack_b(const T* b, std::size_t ldb, bool trans, std::size_t k0, std::size_t depth,
            std::size_t col0, std::size_t cols, T* out) {
  constexpr std::size_t nr = tile_traits<T>::nr;
  for (std::size_t p = 0; p < cols; p += nr) {
    const std::size_t w = std::min(nr, cols - p);
    for (std::size_t k = 0; k < depth; ++k) {
      const std::size_t kk = k0 + k;
      if (!trans && w == nr) {
        std::memcpy(out, b + kk * ldb + col0 + p, nr * sizeof(T));
        out += nr;
        continue;
      }
      for (std::size_t c = 0; c < nr; ++c) {
        T v = T(0);
        if (c < w) {
          const std::size_t j = col0 + p + c;
          v = trans ? b[j * ldb + kk] : b[kk * ldb + j];
        }
        *out++ = v;
      }
    }
  }
}

template <class T>
inline void micro_tile(std::size_t depth, const T* pa, const T* pb, T* c, std::size_t ldc,
                       std::size_t rows, std::size_t cols, bool accumulate) {
  using tr = tile_traits<T>;
  using vec = typename tr::vec;
  constexpr std::size_t mr = tr::mr;
  constexpr std::size_t lanes = tr::lanes;

  vec acc0[mr];
  vec acc1[mr];
  for (std::size_t r = 0; r < mr; ++r) {
    acc0[r] = vec{} ;
    acc1[r] = vec{};
  }
  for (std::size_t k = 0; k < depth; ++k) {
    vec b0;
    vec b1;
    std::memcpy(&b0, pb, sizeof(vec));
    std::memcpy(&b1, pb + lanes, sizeof(vec));
    pb += 2 * lanes;
#pragma GCC unroll 6
    for (std::size_t r = 0; r < mr; ++r) {
      const T s = pa[r];
      acc0[r] += s * b0;
      acc1[r] += s * b1;
    }
    pa += mr;
  }

  if (rows == mr && cols == 2 * lanes) {
    for (std::size_t r = 0; r < mr; ++r) {
      T* dst = c + r * ldc;
      if (accumulate) {
        vec c0;
        vec c1;
        std::memcpy(&c0, dst, sizeof(vec));
        std::memcpy(&c1, dst + lanes, sizeof(vec));
        acc0[r] += c0;
        acc1[r] += c1;
      }
      std::memcpy(dst, &acc0[r], sizeof(vec));
      std::memcpy(dst + lanes, &acc1[r], sizeof(vec));
    }
    return;
  }
  alignas(64) T tile[mr][2 * lanes];
  for (std::size_t r = 0; r < mr; ++r) {
    std::memcpy(&tile[r][0], &acc0[r], sizeof(vec));
    std::memcpy(&tile[r][lanes], &acc1[r], sizeof(vec));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    T* dst = c + r * ldc;
    for (std::size_t j = 0; j < cols; ++j) dst[j] = accumulate ? dst[j] + tile[r][j] : tile[r][j];
  }
}

}  // namespace detail

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, bool accumulate, T* c, std::size_t ldc) {
  static_assert(std::is_floating_point_v<T>);
  using tr = detail::tile_traits<T>;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, T(0));
    return;
  }

  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;

  for (std::size_t jc = 0; jc < n; jc += tr::nc) {
    const std::size_t nb = std::min(tr::nc, n - jc);
    const std::size_t nb_padded = (nb + tr::nr - 1) / tr::nr * tr::nr;
    for (std::size_t pc = 0; pc < k; pc += tr::kc) {
      const std::size_t kb = std::min(tr::kc, k - pc);
      const bool acc = accumulate || pc > 0;
      packed_b.resize(nb_padded * kb);
      detail::pack_b(b, ldb, trans_b, pc, kb, jc, nb, packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += tr::mc) {
        const std::size_t mb = std::min(tr::mc, m - ic);
        const std::size_t mb_padded = (mb + tr::mr - 1) / tr::mr * tr::mr;
        packed_a.resize(mb_padded * kb);
        detail::pack_a(a, lda, trans_a, ic, mb, pc, kb, packed_a.data());
        for (std::size_t jr = 0; jr < nb; jr += tr::nr) {
          const T* pb = packed_b.data() + (jr / tr::nr) * tr::nr * kb;
          const std::size_t cols = std::min(tr::nr, nb - jr);
          for (std::size_t ir = 0; ir < mb; ir += tr::mr) {
            const T* pa = packed_a.data() + (ir / tr::mr) * tr::mr * kb;
            const std::size_t rows = std::min(tr::mr, mb - ir);
            detail::micro_tile(kb, pa, pb, c + (ic + ir) * ldc + jc + jr, ldc, rows, cols, acc);
          }
        }
      }
    }
  }
}

}  // namespace dexined::kernels
