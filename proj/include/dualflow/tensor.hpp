// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dualflow/errors.hpp"
#include "dualflow/rng.hpp"

namespace dualflow {

// Dense row-major matrix of doubles. Sequences are stored as [time x features].
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }

    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    static Tensor randn(int r, int c, Rng& rng, double stddev = 1.0) {
        Tensor t(r, c);
        for (auto& x : t.data) x = stddev * rng.normal();
        return t;
    }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (auto& x : data) x = v;
    }

    double item() const {
        require(rows == 1 && cols == 1, "Tensor::item: tensor is not a scalar");
        return data[0];
    }
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace dualflow
