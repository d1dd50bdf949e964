#pragma once

// Dense compute kernels. `serial` holds the plain reference loops used by the
// tests; `parallel` holds the blocked OpenMP versions the layers call. Every
// output element of a parallel kernel is reduced by exactly one thread in a
// fixed order, so results do not depend on the thread count.

#include <algorithm>
#include <cstddef>

namespace xdsv::kernels {

struct ConvGeometry {
  int in_c = 1;
  int in_h = 1;
  int in_w = 1;
  int out_c = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  int patch() const { return in_c * kernel * kernel; }
  int positions() const { return out_h() * out_w(); }
};

namespace serial {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += A[std::size_t(i) * K + k] * B[std::size_t(k) * N + j];
      C[std::size_t(i) * N + j] += acc;
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += A[std::size_t(i) * K + k] * B[std::size_t(j) * K + k];
      C[std::size_t(i) * N + j] += acc;
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += A[std::size_t(k) * M + i] * B[std::size_t(k) * N + j];
      C[std::size_t(i) * N + j] += acc;
    }
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int c = 0; c < g.in_c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + std::size_t((c * k + ky) * k + kx) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * g.stride - g.pad + kx;
            const bool inside = iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w;
            row[y * ow + xo] = inside ? x[(std::size_t(c) * g.in_h + iy) * g.in_w + ix] : T(0);
          }
        }
      }
}

// Accumulates columns back into dx (dx must be zeroed by the caller).
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int c = 0; c < g.in_c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + std::size_t((c * k + ky) * k + kx) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            dx[(std::size_t(c) * g.in_h + iy) * g.in_w + ix] += row[y * ow + xo];
          }
        }
      }
}

// Direct convolution of one image, weights laid out [out_c, in_c, k, k].
template <typename T>
void conv2d_direct(const T* x, const T* w, const ConvGeometry& g, T* y) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int o = 0; o < g.out_c; ++o)
    for (int yo = 0; yo < oh; ++yo)
      for (int xo = 0; xo < ow; ++xo) {
        T acc = 0;
        for (int c = 0; c < g.in_c; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = yo * g.stride - g.pad + ky;
              const int ix = xo * g.stride - g.pad + kx;
              if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
              acc += w[((std::size_t(o) * g.in_c + c) * k + ky) * k + kx] *
                     x[(std::size_t(c) * g.in_h + iy) * g.in_w + ix];
            }
        y[(std::size_t(o) * oh + yo) * ow + xo] = acc;
      }
}

}  // namespace serial

namespace parallel {

namespace detail {

constexpr int kColBlock = 512;
constexpr int kRowBlock = 4;

// C[M,N] += op(A) * B where op(A)(i,k) = A[i*row_stride + k*col_stride].
template <typename T>
void gemm_strided(int M, int N, int K, const T* A, std::size_t row_stride,
                  std::size_t col_stride, const T* B, T* C) {
  const int nblocks = (N + kColBlock - 1) / kColBlock;
  const int mblocks = (M + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (int jb = 0; jb < nblocks; ++jb)
    for (int ib = 0; ib < mblocks; ++ib) {
      const int j0 = jb * kColBlock;
      const int jn = std::min(kColBlock, N - j0);
      const int i0 = ib * kRowBlock;
      const int in = std::min(kRowBlock, M - i0);
      if (in == kRowBlock) {
        T* c0 = C + std::size_t(i0) * N + j0;
        T* c1 = c0 + N;
        T* c2 = c1 + N;
        T* c3 = c2 + N;
        for (int k = 0; k < K; ++k) {
          const T* b = B + std::size_t(k) * N + j0;
          const T a0 = A[std::size_t(i0) * row_stride + k * col_stride];
          const T a1 = A[std::size_t(i0 + 1) * row_stride + k * col_stride];
          const T a2 = A[std::size_t(i0 + 2) * row_stride + k * col_stride];
          const T a3 = A[std::size_t(i0 + 3) * row_stride + k * col_stride];
#pragma omp simd
          for (int j = 0; j < jn; ++j) {
            const T bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      } else {
        for (int r = 0; r < in; ++r) {
          T* c = C + std::size_t(i0 + r) * N + j0;
          for (int k = 0; k < K; ++k) {
            const T* b = B + std::size_t(k) * N + j0;
            const T a = A[std::size_t(i0 + r) * row_stride + k * col_stride];
#pragma omp simd
            for (int j = 0; j < jn; ++j) c[j] += a * b[j];
          }
        }
      }
    }
}

}  // namespace detail

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  detail::gemm_strided(M, N, K, A, std::size_t(K), std::size_t(1), B, C);
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  detail::gemm_strided(M, N, K, A, std::size_t(1), std::size_t(M), B, C);
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
  const int jblocks = (N + 3) / 4;
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < M; ++i)
    for (int jb = 0; jb < jblocks; ++jb) {
      const T* a = A + std::size_t(i) * K;
      const int j0 = jb * 4;
      if (j0 + 4 <= N) {
        const T* b0 = B + std::size_t(j0) * K;
        const T* b1 = b0 + K;
        const T* b2 = b1 + K;
        const T* b3 = b2 + K;
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
        for (int k = 0; k < K; ++k) {
          const T ak = a[k];
          s0 += ak * b0[k];
          s1 += ak * b1[k];
          s2 += ak * b2[k];
          s3 += ak * b3[k];
        }
        T* c = C + std::size_t(i) * N + j0;
        c[0] += s0;
        c[1] += s1;
        c[2] += s2;
        c[3] += s3;
      } else {
        for (int j = j0; j < N; ++j) {
          const T* b = B + std::size_t(j) * K;
          T s = 0;
#pragma omp simd reduction(+ : s)
          for (int k = 0; k < K; ++k) s += a[k] * b[k];
          C[std::size_t(i) * N + j] += s;
        }
      }
    }
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  const int rows = g.in_c * k * k;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (k * k);
    const int ky = (r / k) % k;
    const int kx = r % k;
    T* row = col + std::size_t(r) * oh * ow;
    const T* plane = x + std::size_t(c) * g.in_h * g.in_w;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride - g.pad + ky;
      T* out = row + std::size_t(y) * ow;
      if (iy < 0 || iy >= g.in_h) {
        std::fill(out, out + ow, T(0));
        continue;
      }
      const T* src = plane + std::size_t(iy) * g.in_w;
      if (g.stride == 1) {
        const int shift = kx - g.pad;
        const int lo = std::max(0, -shift);
        const int hi = std::min(ow, g.in_w - shift);
        std::fill(out, out + std::max(lo, 0), T(0));
        for (int xo = lo; xo < hi; ++xo) out[xo] = src[xo + shift];
        for (int xo = std::max(hi, lo); xo < ow; ++xo) out[xo] = T(0);
      } else {
        for (int xo = 0; xo < ow; ++xo) {
          const int ix = xo * g.stride - g.pad + kx;
          out[xo] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_c; ++c) {
    T* plane = dx + std::size_t(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + std::size_t((c * k + ky) * k + kx) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dst = plane + std::size_t(iy) * g.in_w;
          const T* src = row + std::size_t(y) * ow;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[xo];
          }
        }
      }
  }
}

}  // namespace parallel

}  // namespace xdsv::kernels
