#pragma once

// Low-level data-parallel kernels. Every kernel computes each output element
// wholly inside one thread (fixed-order serial inner loops), so results are
// bitwise identical no matter how many OpenMP threads run. Serial reference
// versions are kept alongside the parallel ones for testing and benchmarks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sarc/tensor.hpp"

namespace sarc::kernels {

// ---------------------------------------------------------------------------
// GEMM: C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is M×K, op(B) is K×N, C is M×N. lda/ldb/ldc are row strides of the
// *stored* matrices (A is K×M when transA, etc.).
// ---------------------------------------------------------------------------

template <class T>
void gemm_serial(bool transA, bool transB, int M, int N, int K, T alpha, const T* A, int lda,
                 const T* B, int ldb, T beta, T* C, int ldc) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            T acc = 0;
            for (int k = 0; k < K; ++k) {
                T a = transA ? A[(int64_t)k * lda + i] : A[(int64_t)i * lda + k];
                T b = transB ? B[(int64_t)j * ldb + k] : B[(int64_t)k * ldb + j];
                acc += a * b;
            }
            T* c = &C[(int64_t)i * ldc + j];
            *c = alpha * acc + (beta == T(0) ? T(0) : beta * *c);
        }
    }
}

template <class T>
void gemm_omp(bool transA, bool transB, int M, int N, int K, T alpha, const T* A, int lda,
              const T* B, int ldb, T beta, T* C, int ldc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        // One row of C per iteration; the k-loop order is fixed, so each
        // element's accumulation order never depends on the thread count.
        for (int j = 0; j < N; ++j) {
            T acc = 0;
            for (int k = 0; k < K; ++k) {
                T a = transA ? A[(int64_t)k * lda + i] : A[(int64_t)i * lda + k];
                T b = transB ? B[(int64_t)j * ldb + k] : B[(int64_t)k * ldb + j];
                acc += a * b;
            }
            T* c = &C[(int64_t)i * ldc + j];
            *c = alpha * acc + (beta == T(0) ? T(0) : beta * *c);
        }
    }
}

// BLAS-backed fast path; falls back to gemm_omp when built without OpenBLAS.
void gemm_blas(bool transA, bool transB, int M, int N, int K, float alpha, const float* A,
               int lda, const float* B, int ldb, float beta, float* C, int ldc);
void gemm_blas(bool transA, bool transB, int M, int N, int K, double alpha, const double* A,
               int lda, const double* B, int ldb, double beta, double* C, int ldc);

template <class T>
void gemm(bool transA, bool transB, int M, int N, int K, T alpha, const T* A, int lda,
          const T* B, int ldb, T beta, T* C, int ldc) {
    if constexpr (std::is_same_v<T, float> || std::is_same_v<T, double>) {
        gemm_blas(transA, transB, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
    } else {
        gemm_omp(transA, transB, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
    }
}

// Convenience: plain C[M,N] = A[M,K] @ B[K,N].
template <class T>
void matmul(const T* A, const T* B, T* C, int M, int N, int K) {
    gemm<T>(false, false, M, N, K, T(1), A, K, B, N, T(0), C, N);
}

// ---------------------------------------------------------------------------
// Convolution via im2col + GEMM. Single-sample layout [C,H,W].
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// col is [C*kh*kw, OH*OW]; zero padding.
template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, T* col) {
    int OH = conv_out_dim(H, kh, stride, pad);
    int OW = conv_out_dim(W, kw, stride, pad);
    int L = OH * OW;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* row = col + (int64_t)((c * kh + ky) * kw + kx) * L;
                for (int oy = 0; oy < OH; ++oy) {
                    int y = oy * stride - pad + ky;
                    for (int ox = 0; ox < OW; ++ox) {
                        int x0 = ox * stride - pad + kx;
                        row[oy * OW + ox] = (y >= 0 && y < H && x0 >= 0 && x0 < W)
                                                ? x[((int64_t)c * H + y) * W + x0]
                                                : T(0);
                    }
                }
            }
        }
    }
}

// Gather form of col2im: each input element sums its own contributions, so
// there are no cross-thread write collisions.
template <class T>
void col2im(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, T* x) {
    int OH = conv_out_dim(H, kh, stride, pad);
    int OW = conv_out_dim(W, kw, stride, pad);
    int L = OH * OW;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x0 = 0; x0 < W; ++x0) {
                T acc = 0;
                for (int ky = 0; ky < kh; ++ky) {
                    int ty = y + pad - ky;
                    if (ty < 0 || ty % stride != 0) continue;
                    int oy = ty / stride;
                    if (oy >= OH) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int tx = x0 + pad - kx;
                        if (tx < 0 || tx % stride != 0) continue;
                        int ox = tx / stride;
                        if (ox >= OW) continue;
                        acc += col[(int64_t)((c * kh + ky) * kw + kx) * L + oy * OW + ox];
                    }
                }
                x[((int64_t)c * H + y) * W + x0] = acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Depthwise convolution (stride 1), used by the 7×7 blocks. Zero padding.
// ---------------------------------------------------------------------------

template <class T>
void depthwise_fwd(const T* x, const T* w, const T* bias, int C, int H, int W, int k, int pad,
                   T* y) {
    int OH = conv_out_dim(H, k, 1, pad);
    int OW = conv_out_dim(W, k, 1, pad);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const T* xc = x + (int64_t)c * H * W;
        const T* wc = w + (int64_t)c * k * k;
        T b = bias ? bias[c] : T(0);
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                T acc = b;
                for (int ky = 0; ky < k; ++ky) {
                    int yy = oy - pad + ky;
                    if (yy < 0 || yy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int xx = ox - pad + kx;
                        if (xx < 0 || xx >= W) continue;
                        acc += xc[yy * W + xx] * wc[ky * k + kx];
                    }
                }
                y[((int64_t)c * OH + oy) * OW + ox] = acc;
            }
        }
    }
}

template <class T>
void depthwise_bwd_input(const T* dy, const T* w, int C, int H, int W, int k, int pad, T* dx) {
    int OH = conv_out_dim(H, k, 1, pad);
    int OW = conv_out_dim(W, k, 1, pad);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const T* dyc = dy + (int64_t)c * OH * OW;
        const T* wc = w + (int64_t)c * k * k;
        for (int y = 0; y < H; ++y) {
            for (int x0 = 0; x0 < W; ++x0) {
                T acc = 0;
                for (int ky = 0; ky < k; ++ky) {
                    int oy = y + pad - ky;
                    if (oy < 0 || oy >= OH) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int ox = x0 + pad - kx;
                        if (ox < 0 || ox >= OW) continue;
                        acc += dyc[oy * OW + ox] * wc[ky * k + kx];
                    }
                }
                dx[((int64_t)c * H + y) * W + x0] = acc;
            }
        }
    }
}

// Accumulates into dw/db (caller zeroes across the batch loop as needed).
template <class T>
void depthwise_bwd_weight(const T* x, const T* dy, int C, int H, int W, int k, int pad, T* dw,
                          T* db) {
    int OH = conv_out_dim(H, k, 1, pad);
    int OW = conv_out_dim(W, k, 1, pad);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const T* xc = x + (int64_t)c * H * W;
        const T* dyc = dy + (int64_t)c * OH * OW;
        T* dwc = dw + (int64_t)c * k * k;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T acc = 0;
                for (int oy = 0; oy < OH; ++oy) {
                    int yy = oy - pad + ky;
                    if (yy < 0 || yy >= H) continue;
                    for (int ox = 0; ox < OW; ++ox) {
                        int xx = ox - pad + kx;
                        if (xx < 0 || xx >= W) continue;
                        acc += xc[yy * W + xx] * dyc[oy * OW + ox];
                    }
                }
                dwc[ky * k + kx] += acc;
            }
        }
        if (db) {
            T acc = 0;
            for (int i = 0; i < OH * OW; ++i) acc += dyc[i];
            db[c] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Max pooling with argmax (no padding). Backward scatters via the stored
// argmax, one channel plane per thread.
// ---------------------------------------------------------------------------

template <class T>
void maxpool_fwd(const T* x, int C, int H, int W, int k, int stride, T* y, int* argmax) {
    int OH = (H - k) / stride + 1;
    int OW = (W - k) / stride + 1;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const T* xc = x + (int64_t)c * H * W;
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                int best = (oy * stride) * W + ox * stride;
                T bv = xc[best];
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        int idx = (oy * stride + ky) * W + (ox * stride + kx);
                        if (xc[idx] > bv) {
                            bv = xc[idx];
                            best = idx;
                        }
                    }
                }
                int64_t o = ((int64_t)c * OH + oy) * OW + ox;
                y[o] = bv;
                if (argmax) argmax[o] = best;
            }
        }
    }
}

template <class T>
void maxpool_bwd(const T* dy, const int* argmax, int C, int H, int W, int OH, int OW, T* dx) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        T* dxc = dx + (int64_t)c * H * W;
        std::fill(dxc, dxc + (int64_t)H * W, T(0));
        const T* dyc = dy + (int64_t)c * OH * OW;
        const int* am = argmax + (int64_t)c * OH * OW;
        for (int i = 0; i < OH * OW; ++i) dxc[am[i]] += dyc[i];
    }
}

// ---------------------------------------------------------------------------
// Resize. Half-pixel-center sampling; clamped to edges.
// ---------------------------------------------------------------------------

template <class T>
void resize_bilinear(const T* x, int C, int H, int W, int OH, int OW, T* y) {
    double sy = (double)H / OH;
    double sx = (double)W / OW;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const T* xc = x + (int64_t)c * H * W;
        T* yc = y + (int64_t)c * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
            double fy = (oy + 0.5) * sy - 0.5;
            int y0 = (int)std::floor(fy);
            double wy = fy - y0;
            int y0c = std::clamp(y0, 0, H - 1);
            int y1c = std::clamp(y0 + 1, 0, H - 1);
            for (int ox = 0; ox < OW; ++ox) {
                double fx = (ox + 0.5) * sx - 0.5;
                int x0 = (int)std::floor(fx);
                double wx = fx - x0;
                int x0c = std::clamp(x0, 0, W - 1);
                int x1c = std::clamp(x0 + 1, 0, W - 1);
                double v = (1 - wy) * ((1 - wx) * xc[y0c * W + x0c] + wx * xc[y0c * W + x1c]) +
                           wy * ((1 - wx) * xc[y1c * W + x0c] + wx * xc[y1c * W + x1c]);
                yc[oy * OW + ox] = (T)v;
            }
        }
    }
}

template <class T>
void resize_nearest(const T* x, int C, int H, int W, int OH, int OW, T* y) {
    double sy = (double)H / OH;
    double sx = (double)W / OW;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const T* xc = x + (int64_t)c * H * W;
        T* yc = y + (int64_t)c * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
            int ys = std::clamp((int)std::floor((oy + 0.5) * sy), 0, H - 1);
            for (int ox = 0; ox < OW; ++ox) {
                int xs = std::clamp((int)std::floor((ox + 0.5) * sx), 0, W - 1);
                yc[oy * OW + ox] = xc[ys * W + xs];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Symmetric reflection pad (edge pixel included, i.e. abc -> abc|cba|abc...).
// Pads on the bottom/right only, up to at least (th, tw). Works for any
// target size via triangle-wave index folding.
// ---------------------------------------------------------------------------

inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    int period = 2 * n;
    int m = i % period;
    return m < n ? m : period - 1 - m;
}

template <class T>
Tensor<T> pad_reflect_to(const Tensor<T>& img, int th, int tw) {
    int H = img.dim(0), W = img.dim(1);
    int OH = std::max(H, th), OW = std::max(W, tw);
    if (OH == H && OW == W) return img;
    Tensor<T> out({OH, OW});
    for (int y = 0; y < OH; ++y) {
        int ys = reflect_index(y, H);
        for (int x = 0; x < OW; ++x) out.v[(int64_t)y * OW + x] = img.v[(int64_t)ys * W + reflect_index(x, W)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sobel gradient magnitude, 3×3 kernels, borders replicate-padded by one
// pixel so output size equals input size.
//   Gx = [-1 0 1; -2 0 2; -1 0 1]   Gy = [-1 -2 -1; 0 0 0; 1 2 1]
// ---------------------------------------------------------------------------

template <class T>
inline void sobel_row(const T* x, int H, int W, int y, T* out) {
    int ym = std::max(y - 1, 0), yp = std::min(y + 1, H - 1);
    const T* r0 = x + (int64_t)ym * W;
    const T* r1 = x + (int64_t)y * W;
    const T* r2 = x + (int64_t)yp * W;
    for (int xq = 0; xq < W; ++xq) {
        int xm = std::max(xq - 1, 0), xp = std::min(xq + 1, W - 1);
        T gx = (r0[xp] - r0[xm]) + 2 * (r1[xp] - r1[xm]) + (r2[xp] - r2[xm]);
        T gy = (r2[xm] - r0[xm]) + 2 * (r2[xq] - r0[xq]) + (r2[xp] - r0[xp]);
        out[xq] = std::sqrt(gx * gx + gy * gy);
    }
}

template <class T>
void sobel_mag_serial(const T* x, int H, int W, T* y) {
    for (int r = 0; r < H; ++r) sobel_row(x, H, W, r, y + (int64_t)r * W);
}

template <class T>
void sobel_mag_omp(const T* x, int H, int W, T* y) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < H; ++r) sobel_row(x, H, W, r, y + (int64_t)r * W);
}

}  // namespace sarc::kernels
