// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace dualflow::kernels {

// Thread count for the parallel kernels. 0 means "OpenMP default".
// Every parallel kernel distributes work over disjoint output rows and keeps
// the per-output summation order identical to a single-threaded run, so
// results are bit-identical for any thread count.
void set_threads(int n);
int threads();

// Naive single-accumulator reference implementations. Kept for differential
// tests and the kernel benchmark; never used on the hot path.
namespace serial {
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);
void conv1d(const double* x, const double* w, const double* bias, double* y, int t_len,
            int c_in, int c_out, int kernel);
void softmax_rows(const double* scores, const uint8_t* mask, double* out, int rows, int cols);
void pairwise_cross_distances(const double* pa, const double* pb, double* out, int t_len,
                              int joints);
}  // namespace serial

// Optimized kernels (OpenMP when beneficial).

// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x n] += a[m x k] * b[k x n]
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x n] += a[m x k] * b[n x k]^T
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x n] += a[k x m]^T * b[k x n]
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);

// 1-D temporal convolution over [t_len x c_in] with symmetric zero padding.
// Weights are stored tap-major: w[co][u * c_in + ci], kernel must be odd.
void conv1d(const double* x, const double* w, const double* bias, double* y, int t_len, int c_in,
            int c_out, int kernel);
void conv1d_grad_input(const double* dy, const double* w, double* dx, int t_len, int c_in,
                       int c_out, int kernel);
void conv1d_grad_weights(const double* dy, const double* x, double* dw, double* dbias, int t_len,
                         int c_in, int c_out, int kernel);

// Row-wise softmax; mask (same shape, 1 = attend) may be null. Masked entries
// get exactly zero weight. Rows with no unmasked entry are the caller's bug
// and are filled with zeros here (the attention layer rejects them upfront).
void softmax_rows(const double* scores, const uint8_t* mask, double* out, int rows, int cols);

void gelu(const double* x, double* y, size_t n);
void gelu_grad(const double* x, const double* dy, double* dx_acc, size_t n);

// out[t][j1 * joints + j2] = || pa[t, j1] - pb[t, j2] ||, positions packed xyz.
void pairwise_cross_distances(const double* pa, const double* pb, double* out, int t_len,
                              int joints);

void axpy(double alpha, const double* x, double* y, size_t n);

double dot(const double* a, const double* b, int n);

}  // namespace dualflow::kernels
