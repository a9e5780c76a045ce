// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Times the optimized/OpenMP kernels against the naive serial reference at
// the shapes the velocity-field network actually runs. Usage:
//   bench_kernels [reps] [threads]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "dualflow/kernels.hpp"
#include "dualflow/rng.hpp"

using namespace dualflow;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

struct Row {
    std::string name;
    double gflop;
    double serial_s;
    double opt_s;
};

void report(const Row& r) {
    std::printf("%-34s %8.3f ms serial  %8.3f ms opt  (%5.2fx, %6.2f GF/s)\n", r.name.c_str(),
                r.serial_s * 1e3, r.opt_s * 1e3, r.serial_s / r.opt_s, r.gflop / r.opt_s);
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 50;
    if (argc > 2) kernels::set_threads(std::atoi(argv[2]));
    std::printf("threads=%d reps=%d\n", kernels::threads(), reps);
    Rng rng(1);

    {
        const int m = 64, k = 64, n = 64;
        auto a = random_vec(static_cast<size_t>(m) * k, rng);
        auto b = random_vec(static_cast<size_t>(k) * n, rng);
        std::vector<double> c(static_cast<size_t>(m) * n);
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) kernels::serial::matmul(a.data(), b.data(), c.data(), m, k, n);
        const double ts = seconds_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r) kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
        const double to = seconds_since(t0) / reps;
        report({"matmul 64x64x64", 2.0 * m * k * n * 1e-9, ts, to});
    }
    {
        const int m = 64, k = 262, n = 64;
        auto a = random_vec(static_cast<size_t>(m) * k, rng);
        auto b = random_vec(static_cast<size_t>(k) * n, rng);
        std::vector<double> c(static_cast<size_t>(m) * n);
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) kernels::serial::matmul(a.data(), b.data(), c.data(), m, k, n);
        const double ts = seconds_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r) kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
        const double to = seconds_since(t0) / reps;
        report({"matmul 64x262x64 (input proj)", 2.0 * m * k * n * 1e-9, ts, to});
    }
    {
        const int m = 64, k = 16, n = 256;
        auto a = random_vec(static_cast<size_t>(m) * k, rng);
        auto b = random_vec(static_cast<size_t>(n) * k, rng);
        std::vector<double> c(static_cast<size_t>(m) * n);
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::serial::matmul_nt(a.data(), b.data(), c.data(), m, k, n);
        const double ts = seconds_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r) kernels::matmul_nt(a.data(), b.data(), c.data(), m, k, n);
        const double to = seconds_since(t0) / reps;
        report({"scores 64x16x256 (retrieval att)", 2.0 * m * k * n * 1e-9, ts, to});
    }
    {
        const int t_len = 64, c_in = 64, c_out = 64, kernel = 21;
        auto x = random_vec(static_cast<size_t>(t_len) * c_in, rng);
        auto w = random_vec(static_cast<size_t>(c_out) * kernel * c_in, rng);
        auto bias = random_vec(c_out, rng);
        std::vector<double> y(static_cast<size_t>(t_len) * c_out);
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::serial::conv1d(x.data(), w.data(), bias.data(), y.data(), t_len, c_in,
                                    c_out, kernel);
        const double ts = seconds_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::conv1d(x.data(), w.data(), bias.data(), y.data(), t_len, c_in, c_out,
                            kernel);
        const double to = seconds_since(t0) / reps;
        report({"conv1d T=64 C=64 k=21", 2.0 * t_len * c_out * c_in * kernel * 1e-9, ts, to});
    }
    {
        const int t_len = 64, joints = 22;
        auto pa = random_vec(static_cast<size_t>(t_len) * joints * 3, rng);
        auto pb = random_vec(static_cast<size_t>(t_len) * joints * 3, rng);
        std::vector<double> d(static_cast<size_t>(t_len) * joints * joints);
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::serial::pairwise_cross_distances(pa.data(), pb.data(), d.data(), t_len,
                                                      joints);
        const double ts = seconds_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::pairwise_cross_distances(pa.data(), pb.data(), d.data(), t_len, joints);
        const double to = seconds_since(t0) / reps;
        report({"pairwise dist T=64 J=22", 9.0 * t_len * joints * joints * 1e-9, ts, to});
    }
    return 0;
}
