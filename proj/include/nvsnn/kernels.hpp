#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "nvsnn/tensor.hpp"

// Dense numeric kernels shared by every cell type and topology.
//
// nvsnn::kernels — OpenMP versions used everywhere in production.
// nvsnn::ref     — serial reference implementations kept for testing.
//
// Parallelism is always over independent output elements with a serial
// inner reduction in ascending index order, so for identical inputs the
// OpenMP kernels produce bit-identical results to the serial reference
// at any thread count.

namespace nvsnn {

inline void check_matmul_dims(std::size_t ak, std::size_t bk) {
    require(ak == bk, Errc::shape_mismatch, "matmul: inner dimensions disagree");
}

namespace ref {

// C[m,n] = A[m,k] * B[k,n]
template <typename T>
void matmul(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
    check_matmul_dims(A.cols(), B.rows());
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    C = Tensor<T>({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            for (std::size_t p = 0; p < k; ++p) acc += A.at(i, p) * B.at(p, j);
            C.at(i, j) = acc;
        }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void matmul_nt(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C, bool accumulate = false) {
    check_matmul_dims(A.cols(), B.cols());
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    if (!accumulate) C = Tensor<T>({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            for (std::size_t p = 0; p < k; ++p) acc += A.at(i, p) * B.at(j, p);
            C.at(i, j) += acc;
        }
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename T>
void matmul_tn(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C, bool accumulate = false) {
    check_matmul_dims(A.rows(), B.rows());
    const std::size_t k = A.rows(), m = A.cols(), n = B.cols();
    if (!accumulate) C = Tensor<T>({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            for (std::size_t p = 0; p < k; ++p) acc += A.at(p, i) * B.at(p, j);
            C.at(i, j) += acc;
        }
}

// Event-driven form of matmul_nt for binary X: skips zero inputs.
template <typename T>
void matmul_nt_binary(const Tensor<T>& X, const Tensor<T>& W, Tensor<T>& Y, bool accumulate = false) {
    check_matmul_dims(X.cols(), W.cols());
    const std::size_t m = X.rows(), k = X.cols(), n = W.rows();
    if (!accumulate) Y = Tensor<T>({m, n});
    for (std::size_t b = 0; b < m; ++b)
        for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            for (std::size_t p = 0; p < k; ++p)
                if (X.at(b, p) != T{}) acc += W.at(j, p);
            Y.at(b, j) += acc;
        }
}

// 3x3 cross-correlation, stride 1, zero padding 1. X [Ci,H,W], K [Co,Ci,3,3].
template <typename T>
void conv3x3(const Tensor<T>& X, const Tensor<T>& K, Tensor<T>& Y) {
    require(X.ndim() == 3 && K.ndim() == 4 && K.dim(2) == 3 && K.dim(3) == 3,
            Errc::shape_mismatch, "conv3x3: bad ranks");
    require(X.dim(0) == K.dim(1), Errc::shape_mismatch, "conv3x3: channel mismatch");
    const std::size_t ci_n = X.dim(0), h = X.dim(1), w = X.dim(2), co_n = K.dim(0);
    Y = Tensor<T>({co_n, h, w});
    for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t oy = 0; oy < h; ++oy)
            for (std::size_t ox = 0; ox < w; ++ox) {
                T acc{};
                for (std::size_t ci = 0; ci < ci_n; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = static_cast<int>(oy) + ky - 1;
                            const int ix = static_cast<int>(ox) + kx - 1;
                            if (iy < 0 || ix < 0 || iy >= static_cast<int>(h) || ix >= static_cast<int>(w)) continue;
                            acc += K.data[((co * ci_n + ci) * 3 + ky) * 3 + kx] *
                                   X.data[(ci * h + iy) * w + ix];
                        }
                Y.data[(co * h + oy) * w + ox] = acc;
            }
}

template <typename T>
void maxpool(const Tensor<T>& X, std::size_t k, Tensor<T>& Y, Tensor<std::uint32_t>& argmax) {
    require(X.ndim() == 3, Errc::shape_mismatch, "maxpool: rank");
    const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2);
    require(h % k == 0 && w % k == 0, Errc::shape_mismatch, "maxpool: dims not divisible by k");
    const std::size_t oh = h / k, ow = w / k;
    Y = Tensor<T>({c, oh, ow});
    argmax = Tensor<std::uint32_t>({c, oh, ow});
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                // ties: first index in row-major scan wins
                std::size_t best = (ci * h + oy * k) * w + ox * k;
                T best_v = X.data[best];
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::size_t idx = (ci * h + oy * k + dy) * w + ox * k + dx;
                        if (X.data[idx] > best_v) {
                            best_v = X.data[idx];
                            best = idx;
                        }
                    }
                Y.data[(ci * oh + oy) * ow + ox] = best_v;
                argmax.data[(ci * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best);
            }
}

template <typename T>
void avgpool(const Tensor<T>& X, std::size_t k, Tensor<T>& Y) {
    require(X.ndim() == 3, Errc::shape_mismatch, "avgpool: rank");
    const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2);
    require(h % k == 0 && w % k == 0, Errc::shape_mismatch, "avgpool: dims not divisible by k");
    const std::size_t oh = h / k, ow = w / k;
    Y = Tensor<T>({c, oh, ow});
    const T inv = static_cast<T>(1.0 / static_cast<double>(k * k));
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                T acc{};
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx)
                        acc += X.data[(ci * h + oy * k + dy) * w + ox * k + dx];
                Y.data[(ci * oh + oy) * ow + ox] = acc * inv;
            }
}

}  // namespace ref

namespace kernels {

template <typename T>
void matmul(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
    check_matmul_dims(A.cols(), B.rows());
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    C = Tensor<T>({m, n});
    const T* a = A.ptr();
    const T* b = B.ptr();
    T* c = C.ptr();
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void matmul_nt(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C, bool accumulate = false) {
    check_matmul_dims(A.cols(), B.cols());
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    if (!accumulate) C = Tensor<T>({m, n});
    const T* a = A.ptr();
    const T* b = B.ptr();
    T* c = C.ptr();
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        const T* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc{};
#pragma omp simd reduction(+ : acc)
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

template <typename T>
void matmul_tn(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C, bool accumulate = false) {
    check_matmul_dims(A.rows(), B.rows());
    const std::size_t k = A.rows(), m = A.cols(), n = B.cols();
    if (!accumulate) C = Tensor<T>({m, n});
    const T* a = A.ptr();
    const T* b = B.ptr();
    T* c = C.ptr();
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[p * m + i];
            const T* brow = b + p * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Active input indices per row of a binary matrix; reused by the
// event-driven forward and the sparse weight-gradient accumulation.
template <typename T>
std::vector<std::vector<std::uint32_t>> active_columns(const Tensor<T>& X) {
    const std::size_t m = X.rows(), k = X.cols();
    std::vector<std::vector<std::uint32_t>> act(m);
    for (std::size_t b = 0; b < m; ++b) {
        const T* row = X.row_ptr(b);
        for (std::size_t p = 0; p < k; ++p)
            if (row[p] != T{}) act[b].push_back(static_cast<std::uint32_t>(p));
    }
    return act;
}

// Y[b,j] (+)= sum over active p of W[j,p]   (X binary in {0,1})
template <typename T>
void matmul_nt_binary(const Tensor<T>& X, const Tensor<T>& W, Tensor<T>& Y, bool accumulate = false) {
    check_matmul_dims(X.cols(), W.cols());
    const std::size_t m = X.rows(), k = X.cols(), n = W.rows();
    if (!accumulate) Y = Tensor<T>({m, n});
    const auto act = active_columns(X);
    const T* w = W.ptr();
    T* y = Y.ptr();
#pragma omp parallel for schedule(static) if (m * n > 4096)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(m); ++b) {
        const auto& cols = act[b];
        T* yrow = y + b * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* wrow = w + j * k;
            T acc{};
            for (std::uint32_t p : cols) acc += wrow[p];
            yrow[j] += acc;
        }
    }
}

// dW[j,p] += sum_b D[b,j] * X[b,p] with X binary; outer product driven by
// the active inputs only.
template <typename T>
void outer_acc_binary(const Tensor<T>& D, const Tensor<T>& X, Tensor<T>& dW) {
    require(D.rows() == X.rows(), Errc::shape_mismatch, "outer_acc_binary: batch mismatch");
    require(dW.rows() == D.cols() && dW.cols() == X.cols(), Errc::shape_mismatch,
            "outer_acc_binary: grad shape");
    const std::size_t m = D.rows(), n = D.cols();
    const auto act = active_columns(X);
    const T* d = D.ptr();
    T* g = dW.ptr();
#pragma omp parallel for schedule(static) if (n > 8)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
        T* grow = g + j * dW.cols();
        for (std::size_t b = 0; b < m; ++b) {
            const T dv = d[b * n + j];
            if (dv == T{}) continue;
            for (std::uint32_t p : act[b]) grow[p] += dv;
        }
    }
}

template <typename T>
void add_row_vector(Tensor<T>& Y, const Tensor<T>& bias) {
    require(Y.cols() == bias.numel(), Errc::shape_mismatch, "add_row_vector: width mismatch");
    const std::size_t m = Y.rows(), n = Y.cols();
    T* y = Y.ptr();
    const T* b = bias.ptr();
#pragma omp parallel for schedule(static) if (m * n > 16384)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] += b[j];
}

// db[j] += sum_b D[b,j]
template <typename T>
void sum_rows_acc(const Tensor<T>& D, Tensor<T>& db) {
    require(db.numel() == D.cols(), Errc::shape_mismatch, "sum_rows_acc: width mismatch");
    const std::size_t m = D.rows(), n = D.cols();
    for (std::size_t b = 0; b < m; ++b)
        for (std::size_t j = 0; j < n; ++j) db.data[j] += D.at(b, j);
}

// ---- batched 3x3 convolution (stride 1, zero padding 1) -------------------

template <typename T>
inline T conv3x3_cell(const T* x, const T* kk, std::size_t ci_n, std::size_t h, std::size_t w,
                      std::size_t oy, std::size_t ox) {
    T acc{};
    for (std::size_t ci = 0; ci < ci_n; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const int iy = static_cast<int>(oy) + ky - 1;
                const int ix = static_cast<int>(ox) + kx - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<int>(h) || ix >= static_cast<int>(w)) continue;
                acc += kk[(ci * 3 + ky) * 3 + kx] * x[(ci * h + iy) * w + ix];
            }
    return acc;
}

// X [B,Ci,H,W], K [Co,Ci,3,3] -> Y [B,Co,H,W]
// Row-sliding form: for each kernel tap, one contiguous axpy over the output
// row (the valid ox range trims the zero padding).
template <typename T>
void conv3x3_batch(const Tensor<T>& X, const Tensor<T>& K, Tensor<T>& Y, bool accumulate = false) {
    require(X.ndim() == 4 && K.ndim() == 4, Errc::shape_mismatch, "conv3x3_batch: ranks");
    require(X.dim(1) == K.dim(1), Errc::shape_mismatch, "conv3x3_batch: channel mismatch");
    const std::size_t bsz = X.dim(0), ci_n = X.dim(1), h = X.dim(2), w = X.dim(3), co_n = K.dim(0);
    if (!accumulate) Y = Tensor<T>({bsz, co_n, h, w});
    const T* x = X.ptr();
    const T* k = K.ptr();
    T* y = Y.ptr();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b)
        for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(co_n); ++co) {
            const T* xs = x + b * ci_n * h * w;
            const T* ks = k + co * ci_n * 9;
            T* ys = y + (b * co_n + co) * h * w;
            for (std::size_t oy = 0; oy < h; ++oy) {
                T* yrow = ys + oy * w;
                for (std::size_t ci = 0; ci < ci_n; ++ci)
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = static_cast<int>(oy) + ky - 1;
                        if (iy < 0 || iy >= static_cast<int>(h)) continue;
                        const T* xrow = xs + (ci * h + iy) * w;
                        for (int kx = 0; kx < 3; ++kx) {
                            const T kv = ks[(ci * 3 + ky) * 3 + kx];
                            const int shift = kx - 1;  // ix = ox + shift
                            const std::size_t ox_lo = shift < 0 ? 1 : 0;
                            const std::size_t ox_hi = shift > 0 ? w - 1 : w;
                            const T* src = xrow + shift;
#pragma omp simd
                            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) yrow[ox] += kv * src[ox];
                        }
                    }
            }
        }
}

// dX[b,ci,iy,ix] = sum_{co,ky,kx} K[co,ci,ky,kx] * dY[b,co,iy-ky+1,ix-kx+1]
template <typename T>
void conv3x3_input_grad_batch(const Tensor<T>& dY, const Tensor<T>& K, Tensor<T>& dX,
                              bool accumulate = false) {
    const std::size_t bsz = dY.dim(0), co_n = dY.dim(1), h = dY.dim(2), w = dY.dim(3);
    const std::size_t ci_n = K.dim(1);
    require(K.dim(0) == co_n, Errc::shape_mismatch, "conv3x3_input_grad: channel mismatch");
    if (!accumulate) dX = Tensor<T>({bsz, ci_n, h, w});
    const T* dy = dY.ptr();
    const T* k = K.ptr();
    T* dx = dX.ptr();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b)
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(ci_n); ++ci) {
            T* dxs = dx + (b * ci_n + ci) * h * w;
            for (std::size_t iy = 0; iy < h; ++iy) {
                T* dxrow = dxs + iy * w;
                for (std::size_t co = 0; co < co_n; ++co)
                    for (int ky = 0; ky < 3; ++ky) {
                        const int oy = static_cast<int>(iy) - ky + 1;
                        if (oy < 0 || oy >= static_cast<int>(h)) continue;
                        const T* dyrow = dy + ((b * co_n + co) * h + oy) * w;
                        for (int kx = 0; kx < 3; ++kx) {
                            const T kv = k[((co * ci_n + ci) * 3 + ky) * 3 + kx];
                            const int shift = kx - 1;  // ox = ix - shift
                            const std::size_t ix_lo = shift > 0 ? shift : 0;
                            const std::size_t ix_hi = shift < 0 ? w + shift : w;
                            const T* src = dyrow - shift;
#pragma omp simd
                            for (std::size_t ix = ix_lo; ix < ix_hi; ++ix) dxrow[ix] += kv * src[ix];
                        }
                    }
            }
        }
}

// dK[co,ci,ky,kx] += sum_{b,oy,ox} dY[b,co,oy,ox] * X[b,ci,oy+ky-1,ox+kx-1]
template <typename T>
void conv3x3_kernel_grad_batch(const Tensor<T>& dY, const Tensor<T>& X, Tensor<T>& dK) {
    const std::size_t bsz = dY.dim(0), co_n = dY.dim(1), h = dY.dim(2), w = dY.dim(3);
    const std::size_t ci_n = X.dim(1);
    require(dK.dim(0) == co_n && dK.dim(1) == ci_n, Errc::shape_mismatch,
            "conv3x3_kernel_grad: grad shape");
    const T* dy = dY.ptr();
    const T* x = X.ptr();
    T* dk = dK.ptr();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(co_n); ++co)
        for (std::size_t ci = 0; ci < ci_n; ++ci)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    T acc{};
                    for (std::size_t b = 0; b < bsz; ++b)
                        for (std::size_t oy = 0; oy < h; ++oy) {
                            const int iy = static_cast<int>(oy) + ky - 1;
                            if (iy < 0 || iy >= static_cast<int>(h)) continue;
                            const T* dyrow = dy + ((b * co_n + co) * h + oy) * w;
                            const T* xrow = x + ((b * ci_n + ci) * h + iy) * w;
                            const int shift = kx - 1;  // ix = ox + shift
                            const std::size_t ox_lo = shift < 0 ? 1 : 0;
                            const std::size_t ox_hi = shift > 0 ? w - 1 : w;
                            const T* src = xrow + shift;
                            T inner{};
#pragma omp simd reduction(+ : inner)
                            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) inner += dyrow[ox] * src[ox];
                            acc += inner;
                        }
                    dk[((co * ci_n + ci) * 3 + ky) * 3 + kx] += acc;
                }
}

// ---- batched pooling -------------------------------------------------------

template <typename T>
void maxpool_batch(const Tensor<T>& X, std::size_t k, Tensor<T>& Y, Tensor<std::uint32_t>& argmax) {
    require(X.ndim() == 4, Errc::shape_mismatch, "maxpool_batch: rank");
    const std::size_t bsz = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
    require(h % k == 0 && w % k == 0, Errc::shape_mismatch, "maxpool: dims not divisible by k");
    const std::size_t oh = h / k, ow = w / k;
    Y = Tensor<T>({bsz, c, oh, ow});
    argmax = Tensor<std::uint32_t>({bsz, c, oh, ow});
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b)
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci) {
            const T* xs = X.ptr() + (b * c + ci) * h * w;
            T* ys = Y.ptr() + (b * c + ci) * oh * ow;
            std::uint32_t* as = argmax.ptr() + (b * c + ci) * oh * ow;
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    std::size_t best = (oy * k) * w + ox * k;
                    T best_v = xs[best];
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            const std::size_t idx = (oy * k + dy) * w + ox * k + dx;
                            if (xs[idx] > best_v) {
                                best_v = xs[idx];
                                best = idx;
                            }
                        }
                    ys[oy * ow + ox] = best_v;
                    as[oy * ow + ox] = static_cast<std::uint32_t>(best);
                }
        }
}

template <typename T>
void maxpool_backward_batch(const Tensor<T>& dY, const Tensor<std::uint32_t>& argmax, std::size_t k,
                            Tensor<T>& dX) {
    const std::size_t bsz = dY.dim(0), c = dY.dim(1), oh = dY.dim(2), ow = dY.dim(3);
    dX = Tensor<T>({bsz, c, oh * k, ow * k});
    const std::size_t plane = (oh * k) * (ow * k);
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b)
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci) {
            const T* dys = dY.ptr() + (b * c + ci) * oh * ow;
            const std::uint32_t* as = argmax.ptr() + (b * c + ci) * oh * ow;
            T* dxs = dX.ptr() + (b * c + ci) * plane;
            for (std::size_t i = 0; i < oh * ow; ++i) dxs[as[i]] += dys[i];
        }
}

template <typename T>
void avgpool_batch(const Tensor<T>& X, std::size_t k, Tensor<T>& Y) {
    require(X.ndim() == 4, Errc::shape_mismatch, "avgpool_batch: rank");
    const std::size_t bsz = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
    require(h % k == 0 && w % k == 0, Errc::shape_mismatch, "avgpool: dims not divisible by k");
    const std::size_t oh = h / k, ow = w / k;
    Y = Tensor<T>({bsz, c, oh, ow});
    const T inv = static_cast<T>(1.0 / static_cast<double>(k * k));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b)
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci) {
            const T* xs = X.ptr() + (b * c + ci) * h * w;
            T* ys = Y.ptr() + (b * c + ci) * oh * ow;
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T acc{};
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx) acc += xs[(oy * k + dy) * w + ox * k + dx];
                    ys[oy * ow + ox] = acc * inv;
                }
        }
}

template <typename T>
void avgpool_backward_batch(const Tensor<T>& dY, std::size_t k, Tensor<T>& dX) {
    const std::size_t bsz = dY.dim(0), c = dY.dim(1), oh = dY.dim(2), ow = dY.dim(3);
    dX = Tensor<T>({bsz, c, oh * k, ow * k});
    const T inv = static_cast<T>(1.0 / static_cast<double>(k * k));
    const std::size_t h = oh * k, w = ow * k;
#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b)
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(c); ++ci) {
            const T* dys = dY.ptr() + (b * c + ci) * oh * ow;
            T* dxs = dX.ptr() + (b * c + ci) * h * w;
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const T g = dys[oy * ow + ox] * inv;
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx) dxs[(oy * k + dy) * w + ox * k + dx] += g;
                }
        }
}

}  // namespace kernels

// Spec-surface wrappers: C = A*B with the closed-form backward
// dA = dC*B^T, dB = A^T*dC.
template <typename T>
Tensor<T> matmul(const Tensor<T>& A, const Tensor<T>& B) {
    Tensor<T> C;
    kernels::matmul(A, B, C);
    return C;
}

template <typename T>
void matmul_backward(const Tensor<T>& dC, const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& dA,
                     Tensor<T>& dB) {
    kernels::matmul_nt(dC, B, dA);  // dA[m,k] = dC[m,n] * (B[k,n])^T
    kernels::matmul_tn(A, dC, dB);  // dB[k,n] = (A[m,k])^T * dC[m,n]
}

}  // namespace nvsnn
