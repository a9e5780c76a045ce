// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dualflow::kernels {

namespace {
int g_threads = 0;

int effective_threads() {
#ifdef _OPENMP
    return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
    return 1;
#endif
}
}  // namespace

void set_threads(int n) {
    g_threads = n < 0 ? 0 : n;
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

int threads() { return effective_threads(); }

double dot(const double* a, const double* b, int n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        s4 += a[i + 4] * b[i + 4];
        s5 += a[i + 5] * b[i + 5];
        s6 += a[i + 6] * b[i + 6];
        s7 += a[i + 7] * b[i + 7];
    }
    double s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] = s;
        }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] += s;
        }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
            c[i * n + j] += s;
        }
}

void conv1d(const double* x, const double* w, const double* bias, double* y, int t_len, int c_in,
            int c_out, int kernel) {
    const int half = kernel / 2;
    for (int t = 0; t < t_len; ++t)
        for (int co = 0; co < c_out; ++co) {
            double s = bias ? bias[co] : 0.0;
            for (int u = 0; u < kernel; ++u) {
                const int tt = t + u - half;
                if (tt < 0 || tt >= t_len) continue;
                for (int ci = 0; ci < c_in; ++ci)
                    s += w[co * kernel * c_in + u * c_in + ci] * x[tt * c_in + ci];
            }
            y[t * c_out + co] = s;
        }
}

void softmax_rows(const double* scores, const uint8_t* mask, double* out, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* s = scores + static_cast<size_t>(i) * cols;
        const uint8_t* m = mask ? mask + static_cast<size_t>(i) * cols : nullptr;
        double* o = out + static_cast<size_t>(i) * cols;
        double mx = -1e300;
        bool any = false;
        for (int j = 0; j < cols; ++j)
            if (!m || m[j]) {
                mx = std::max(mx, s[j]);
                any = true;
            }
        if (!any) {
            std::fill(o, o + cols, 0.0);
            continue;
        }
        double z = 0;
        for (int j = 0; j < cols; ++j) {
            o[j] = (!m || m[j]) ? std::exp(s[j] - mx) : 0.0;
            z += o[j];
        }
        for (int j = 0; j < cols; ++j) o[j] /= z;
    }
}

void pairwise_cross_distances(const double* pa, const double* pb, double* out, int t_len,
                              int joints) {
    for (int t = 0; t < t_len; ++t)
        for (int j1 = 0; j1 < joints; ++j1)
            for (int j2 = 0; j2 < joints; ++j2) {
                const double* a = pa + (static_cast<size_t>(t) * joints + j1) * 3;
                const double* b = pb + (static_cast<size_t>(t) * joints + j2) * 3;
                const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
                out[(static_cast<size_t>(t) * joints + j1) * joints + j2] =
                    std::sqrt(dx * dx + dy * dy + dz * dz);
            }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// optimized + OpenMP
// ---------------------------------------------------------------------------

namespace {

inline void matmul_row(const double* a, const double* b, double* c, int k, int n, bool zero) {
    if (zero) std::memset(c, 0, sizeof(double) * n);
    for (int p = 0; p < k; ++p) {
        const double aip = a[p];
        const double* __restrict__ bp = b + static_cast<size_t>(p) * n;
        double* __restrict__ cr = c;
        for (int j = 0; j < n; ++j) cr[j] += aip * bp[j];
    }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m > 3 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i)
        matmul_row(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k, n, true);
}

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m > 3 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i)
        matmul_row(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k, n, false);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m > 3 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = dot(ai, b + static_cast<size_t>(j) * k, k);
    }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m > 3 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] += dot(ai, b + static_cast<size_t>(j) * k, k);
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    // c rows are disjoint per i; the p-loop order is preserved inside each row.
#pragma omp parallel for schedule(static) if (m > 3 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        double* __restrict__ ci = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double api = a[static_cast<size_t>(p) * m + i];
            const double* __restrict__ bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void conv1d(const double* x, const double* w, const double* bias, double* y, int t_len, int c_in,
            int c_out, int kernel) {
    const int half = kernel / 2;
#pragma omp parallel for schedule(static) if (t_len > 7)
    for (int t = 0; t < t_len; ++t) {
        double* yt = y + static_cast<size_t>(t) * c_out;
        const int u0 = std::max(0, half - t);
        const int u1 = std::min(kernel, t_len + half - t);
        for (int co = 0; co < c_out; ++co) {
            const double* wrow = w + static_cast<size_t>(co) * kernel * c_in;
            double s = bias ? bias[co] : 0.0;
            for (int u = u0; u < u1; ++u)
                s += dot(wrow + static_cast<size_t>(u) * c_in,
                         x + static_cast<size_t>(t + u - half) * c_in, c_in);
            yt[co] = s;
        }
    }
}

void conv1d_grad_input(const double* dy, const double* w, double* dx, int t_len, int c_in,
                       int c_out, int kernel) {
    const int half = kernel / 2;
    // dx[tt, ci] += sum_{co,u : tt = t + u - half} w[co, u, ci] * dy[t, co]
#pragma omp parallel for schedule(static) if (t_len > 7)
    for (int tt = 0; tt < t_len; ++tt) {
        double* __restrict__ dxt = dx + static_cast<size_t>(tt) * c_in;
        for (int u = 0; u < kernel; ++u) {
            const int t = tt - u + half;
            if (t < 0 || t >= t_len) continue;
            const double* dyt = dy + static_cast<size_t>(t) * c_out;
            for (int co = 0; co < c_out; ++co) {
                const double g = dyt[co];
                if (g == 0.0) continue;
                const double* __restrict__ wrow =
                    w + (static_cast<size_t>(co) * kernel + u) * c_in;
                for (int ci = 0; ci < c_in; ++ci) dxt[ci] += g * wrow[ci];
            }
        }
    }
}

void conv1d_grad_weights(const double* dy, const double* x, double* dw, double* dbias, int t_len,
                         int c_in, int c_out, int kernel) {
    const int half = kernel / 2;
#pragma omp parallel for schedule(static) if (c_out > 3)
    for (int co = 0; co < c_out; ++co) {
        double* __restrict__ dwrow = dw + static_cast<size_t>(co) * kernel * c_in;
        double db = 0.0;
        for (int t = 0; t < t_len; ++t) {
            const double g = dy[static_cast<size_t>(t) * c_out + co];
            db += g;
            if (g == 0.0) continue;
            const int u0 = std::max(0, half - t);
            const int u1 = std::min(kernel, t_len + half - t);
            for (int u = u0; u < u1; ++u) {
                const double* __restrict__ xt = x + static_cast<size_t>(t + u - half) * c_in;
                double* __restrict__ dwu = dwrow + static_cast<size_t>(u) * c_in;
                for (int ci = 0; ci < c_in; ++ci) dwu[ci] += g * xt[ci];
            }
        }
        if (dbias) dbias[co] += db;
    }
}

void softmax_rows(const double* scores, const uint8_t* mask, double* out, int rows, int cols) {
#pragma omp parallel for schedule(static) if (rows > 7)
    for (int i = 0; i < rows; ++i)
        serial::softmax_rows(scores + static_cast<size_t>(i) * cols,
                             mask ? mask + static_cast<size_t>(i) * cols : nullptr,
                             out + static_cast<size_t>(i) * cols, 1, cols);
}

void gelu(const double* x, double* y, size_t n) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
#pragma omp parallel for schedule(static) if (n > 4096)
    for (long i = 0; i < static_cast<long>(n); ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
}

void gelu_grad(const double* x, const double* dy, double* dx_acc, size_t n) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
#pragma omp parallel for schedule(static) if (n > 4096)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
        dx_acc[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void pairwise_cross_distances(const double* pa, const double* pb, double* out, int t_len,
                              int joints) {
#pragma omp parallel for schedule(static) if (t_len > 3)
    for (int t = 0; t < t_len; ++t)
        serial::pairwise_cross_distances(pa + static_cast<size_t>(t) * joints * 3,
                                         pb + static_cast<size_t>(t) * joints * 3,
                                         out + static_cast<size_t>(t) * joints * joints, 1,
                                         joints);
}

void axpy(double alpha, const double* x, double* y, size_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
    for (long i = 0; i < static_cast<long>(n); ++i) y[i] += alpha * x[i];
}

}  // namespace dualflow::kernels
