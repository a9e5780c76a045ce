// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differential tests: optimized/OpenMP kernels against the naive serial
// reference, plus bit-exactness across thread counts (the parallel kernels
// partition work over disjoint output rows, so any thread count must produce
// the identical bytes).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dualflow/kernels.hpp"
#include "dualflow/rng.hpp"

using namespace dualflow;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("matmul family matches serial reference") {
    Rng rng(7);
    for (auto [m, k, n] : {std::tuple{5, 9, 7}, std::tuple{64, 64, 64}, std::tuple{33, 262, 64},
                           std::tuple{1, 17, 3}}) {
        auto a = random_vec(static_cast<size_t>(m) * k, rng);
        auto b = random_vec(static_cast<size_t>(k) * n, rng);
        std::vector<double> c_ref(static_cast<size_t>(m) * n), c_opt(c_ref.size());
        kernels::serial::matmul(a.data(), b.data(), c_ref.data(), m, k, n);
        kernels::matmul(a.data(), b.data(), c_opt.data(), m, k, n);
        CHECK(max_abs(c_ref, c_opt) < 1e-12);

        auto bt = random_vec(static_cast<size_t>(n) * k, rng);
        std::vector<double> d_ref(static_cast<size_t>(m) * n), d_opt(d_ref.size());
        kernels::serial::matmul_nt(a.data(), bt.data(), d_ref.data(), m, k, n);
        kernels::matmul_nt(a.data(), bt.data(), d_opt.data(), m, k, n);
        CHECK(max_abs(d_ref, d_opt) < 1e-12);

        auto at = random_vec(static_cast<size_t>(k) * m, rng);
        auto b2 = random_vec(static_cast<size_t>(k) * n, rng);
        std::vector<double> e_ref(static_cast<size_t>(m) * n, 0.5), e_opt(e_ref.size(), 0.5);
        kernels::serial::matmul_tn_acc(at.data(), b2.data(), e_ref.data(), m, k, n);
        kernels::matmul_tn_acc(at.data(), b2.data(), e_opt.data(), m, k, n);
        CHECK(max_abs(e_ref, e_opt) < 1e-12);
    }
}

TEST_CASE("conv1d matches serial reference") {
    Rng rng(11);
    const int t_len = 40, c_in = 16, c_out = 12;
    for (int kernel : {1, 3, 7, 21}) {
        auto x = random_vec(static_cast<size_t>(t_len) * c_in, rng);
        auto w = random_vec(static_cast<size_t>(c_out) * kernel * c_in, rng);
        auto bias = random_vec(c_out, rng);
        std::vector<double> y_ref(static_cast<size_t>(t_len) * c_out), y_opt(y_ref.size());
        kernels::serial::conv1d(x.data(), w.data(), bias.data(), y_ref.data(), t_len, c_in,
                                c_out, kernel);
        kernels::conv1d(x.data(), w.data(), bias.data(), y_opt.data(), t_len, c_in, c_out,
                        kernel);
        CHECK(max_abs(y_ref, y_opt) < 1e-12);
    }
}

TEST_CASE("softmax_rows handles masks and matches reference") {
    Rng rng(13);
    const int rows = 10, cols = 12;
    auto s = random_vec(static_cast<size_t>(rows) * cols, rng);
    std::vector<uint8_t> mask(s.size());
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) mask[static_cast<size_t>(i) * cols + j] = rng.bernoulli(0.7);
        mask[static_cast<size_t>(i) * cols] = 1;  // keep every row attendable
    }
    std::vector<double> y_ref(s.size()), y_opt(s.size());
    kernels::serial::softmax_rows(s.data(), mask.data(), y_ref.data(), rows, cols);
    kernels::softmax_rows(s.data(), mask.data(), y_opt.data(), rows, cols);
    CHECK(max_abs(y_ref, y_opt) == 0.0);

    for (int i = 0; i < rows; ++i) {
        double sum = 0;
        for (int j = 0; j < cols; ++j) {
            const size_t id = static_cast<size_t>(i) * cols + j;
            if (!mask[id]) CHECK(y_opt[id] == 0.0);
            sum += y_opt[id];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("pairwise_cross_distances matches reference") {
    Rng rng(17);
    const int t_len = 6, joints = 22;
    auto pa = random_vec(static_cast<size_t>(t_len) * joints * 3, rng);
    auto pb = random_vec(static_cast<size_t>(t_len) * joints * 3, rng);
    std::vector<double> d_ref(static_cast<size_t>(t_len) * joints * joints), d_opt(d_ref.size());
    kernels::serial::pairwise_cross_distances(pa.data(), pb.data(), d_ref.data(), t_len, joints);
    kernels::pairwise_cross_distances(pa.data(), pb.data(), d_opt.data(), t_len, joints);
    CHECK(max_abs(d_ref, d_opt) == 0.0);
}

TEST_CASE("parallel kernels are bit-exact across thread counts") {
    Rng rng(23);
    const int m = 48, k = 70, n = 52;
    auto a = random_vec(static_cast<size_t>(m) * k, rng);
    auto b = random_vec(static_cast<size_t>(k) * n, rng);
    std::vector<double> c1(static_cast<size_t>(m) * n), c4(c1.size());

    kernels::set_threads(1);
    kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
    kernels::set_threads(4);
    kernels::matmul(a.data(), b.data(), c4.data(), m, k, n);
    kernels::set_threads(0);
    for (size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == c4[i]);

    const int t_len = 64, c_in = 32, c_out = 32, kernel = 11;
    auto x = random_vec(static_cast<size_t>(t_len) * c_in, rng);
    auto w = random_vec(static_cast<size_t>(c_out) * kernel * c_in, rng);
    auto bias = random_vec(c_out, rng);
    std::vector<double> y1(static_cast<size_t>(t_len) * c_out), y4(y1.size());
    kernels::set_threads(1);
    kernels::conv1d(x.data(), w.data(), bias.data(), y1.data(), t_len, c_in, c_out, kernel);
    kernels::set_threads(4);
    kernels::conv1d(x.data(), w.data(), bias.data(), y4.data(), t_len, c_in, c_out, kernel);
    kernels::set_threads(0);
    for (size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y4[i]);
}

TEST_CASE("gelu matches erf closed form and gradient matches finite differences") {
    Rng rng(29);
    auto x = random_vec(257, rng);
    std::vector<double> y(x.size());
    kernels::gelu(x.data(), y.data(), x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double expect = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
        CHECK(y[i] == doctest::Approx(expect).epsilon(1e-14));
    }

    std::vector<double> dy(x.size(), 1.0), dx(x.size(), 0.0);
    kernels::gelu_grad(x.data(), dy.data(), dx.data(), x.size());
    const double h = 1e-6;
    for (size_t i = 0; i < 16; ++i) {
        double xp = x[i] + h, xm = x[i] - h, yp, ym;
        kernels::gelu(&xp, &yp, 1);
        kernels::gelu(&xm, &ym, 1);
        const double fd = (yp - ym) / (2 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}
