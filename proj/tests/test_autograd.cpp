// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-op gradient checks against central finite differences at 64-bit
// precision. Every op used by the velocity-field network and the losses is
// covered here so higher-level gradient failures localize quickly.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "dualflow/autograd.hpp"

using namespace dualflow;

namespace {

// Builds a scalar function of `inputs`, checks d(out)/d(inputs[i]) for all i.
// rebuild() must construct the graph from fresh leaf tensors each call.
void check_gradients(std::vector<Tensor> inputs,
                     const std::function<Var(Tape&, std::vector<Var>&)>& build,
                     double tol = 1e-7) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (auto& in : inputs) vars.push_back(tape.leaf(in, true));
    Var out = build(tape, vars);
    REQUIRE(out.val().rows == 1);
    REQUIRE(out.val().cols == 1);
    tape.backward(out);

    std::vector<Tensor> analytic;
    for (auto& v : vars) analytic.push_back(tape.grad_of(v.idx));

    const double h = 1e-6;
    for (size_t vi = 0; vi < inputs.size(); ++vi) {
        for (size_t e = 0; e < inputs[vi].size(); ++e) {
            auto eval = [&](double delta) {
                Tape t2;
                std::vector<Var> vs;
                for (size_t k = 0; k < inputs.size(); ++k) {
                    Tensor c = inputs[k];
                    if (k == vi) c.data[e] += delta;
                    vs.push_back(t2.leaf(c, false));
                }
                return build(t2, vs).item();
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            const double an = analytic[vi].data[e];
            const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
            CHECK(std::abs(fd - an) / scale < tol);
        }
    }
}

Tensor randn(int r, int c, uint64_t seed) {
    Rng rng(seed);
    return Tensor::randn(r, c, rng);
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    check_gradients({randn(3, 4, 1), randn(3, 4, 2)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(mul(add(v[0], v[1]), sub(v[0], scale(v[1], 0.7))));
    });
    check_gradients({randn(3, 4, 3)},
                    [](Tape&, std::vector<Var>& v) { return mean_all(gelu(v[0])); });
    check_gradients({randn(2, 5, 4)},
                    [](Tape&, std::vector<Var>& v) { return sum_all(abs_val(v[0])); }, 1e-6);
    check_gradients({Tensor::full(2, 3, 2.5)},
                    [](Tape&, std::vector<Var>& v) { return sum_all(sqrt_val(v[0])); });
}

TEST_CASE("broadcast op gradients") {
    check_gradients({randn(4, 3, 5), randn(1, 3, 6)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(add_rowvec(v[0], v[1]));
    });
    check_gradients({randn(4, 3, 7), randn(1, 3, 8)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(mul_rowvec(v[0], v[1]));
    });
    check_gradients({randn(1, 5, 9)},
                    [](Tape&, std::vector<Var>& v) { return mean_all(tile_rows(v[0], 6)); });
}

TEST_CASE("matmul gradients") {
    check_gradients({randn(3, 4, 10), randn(4, 5, 11)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(matmul(v[0], v[1]));
    });
    check_gradients({randn(3, 4, 12), randn(6, 4, 13)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(gelu(matmul_nt(v[0], v[1])));
    });
}

TEST_CASE("slice / concat / gather gradients") {
    check_gradients({randn(3, 8, 14)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(mul(slice_cols(v[0], 1, 4), slice_cols(v[0], 4, 7)));
    });
    check_gradients({randn(5, 4, 15)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(mul(slice_rows(v[0], 0, 2), slice_rows(v[0], 2, 4)));
    });
    check_gradients({randn(2, 3, 16), randn(2, 2, 17)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(gelu(concat_cols({v[0], v[1]})));
    });
    check_gradients({randn(2, 3, 18), randn(4, 3, 19)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(gelu(concat_rows({v[0], v[1]})));
    });
    check_gradients({randn(6, 3, 20)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(gelu(gather_rows(v[0], {0, 2, 2, 5})));
    });
}

TEST_CASE("normalization and softmax gradients") {
    check_gradients({randn(4, 6, 21)},
                    [](Tape&, std::vector<Var>& v) { return mean_all(norm_rows(v[0])); }, 1e-6);

    auto mask = std::make_shared<std::vector<uint8_t>>(std::vector<uint8_t>{
        1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1});
    check_gradients({randn(3, 4, 22)}, [mask](Tape&, std::vector<Var>& v) {
        return mean_all(softmax_rows(scale(v[0], 1.3), mask));
    });
    check_gradients({randn(3, 4, 23)}, [](Tape&, std::vector<Var>& v) {
        return mean_all(softmax_rows(v[0], nullptr));
    });
}

TEST_CASE("softmax rejects fully masked rows") {
    Tape tape;
    Var s = tape.leaf(randn(2, 3, 24), true);
    auto mask = std::make_shared<std::vector<uint8_t>>(std::vector<uint8_t>{1, 1, 1, 0, 0, 0});
    CHECK_THROWS_AS(softmax_rows(s, mask), ValidationError);
}

TEST_CASE("cosine similarity gradients and zero-norm convention") {
    check_gradients({randn(2, 5, 25), randn(2, 5, 26)}, [](Tape&, std::vector<Var>& v) {
        return cosine_sim_flat(v[0], v[1]);
    });

    Tape tape;
    Var a = tape.leaf(Tensor::zeros(1, 4), true);
    Var b = tape.leaf(randn(1, 4, 27), true);
    bool hit = false;
    Var c = cosine_sim_flat(a, b, &hit);
    CHECK(hit);
    CHECK(c.item() == 0.0);
}

TEST_CASE("conv1d gradients") {
    for (int kernel : {1, 3, 5}) {
        check_gradients({randn(7, 3, 30 + kernel), randn(4, kernel * 3, 40 + kernel),
                         randn(1, 4, 50 + kernel)},
                        [kernel](Tape&, std::vector<Var>& v) {
                            return mean_all(gelu(conv1d(v[0], v[1], v[2], kernel)));
                        });
    }
}

TEST_CASE("conv1d rejects even kernels") {
    Tape tape;
    Var x = tape.leaf(randn(6, 2, 60), false);
    Var w = tape.leaf(randn(2, 4 * 2, 61), false);
    Var b = tape.leaf(Tensor::zeros(1, 2), false);
    CHECK_THROWS_AS(conv1d(x, w, b, 4), ValidationError);
}

TEST_CASE("parameters accumulate gradients through the tape") {
    Rng rng(99);
    ParamStore store;
    Parameter& p = store.create("w", 3, 3, rng, 0.5);

    Tape tape;
    Var w = tape.param(p);
    Var x = tape.constant(randn(2, 3, 62));
    Var loss = mean_all(matmul(x, w));
    tape.backward(loss);

    // d(mean(X W))/dW = X^T 1 / (2*3)
    Tensor expected = Tensor::zeros(3, 3);
    for (int i = 0; i < 2; ++i)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) expected.at(r, c) += x.val().at(i, r) / 6.0;
    CHECK(max_abs_diff(p.grad, expected) < 1e-12);

    // second backward accumulates
    Tape tape2;
    Var w2 = tape2.param(p);
    Var loss2 = mean_all(matmul(tape2.constant(x.val()), w2));
    tape2.backward(loss2);
    Tensor doubled = expected;
    for (auto& v : doubled.data) v *= 2;
    CHECK(max_abs_diff(p.grad, doubled) < 1e-12);
}

TEST_CASE("mean_rows gradient") {
    check_gradients({randn(5, 3, 63)},
                    [](Tape&, std::vector<Var>& v) { return mean_all(gelu(mean_rows(v[0]))); });
}

TEST_CASE("dropout is identity at p=0 and scales kept entries") {
    Tape tape;
    Rng rng(3);
    Var a = tape.leaf(randn(4, 4, 64), true);
    Var d0 = dropout(a, 0.0, rng);
    CHECK(d0.idx == a.idx);

    Var d = dropout(a, 0.5, rng);
    const Tensor& dv = d.val();
    const Tensor& av = a.val();
    for (size_t i = 0; i < dv.size(); ++i) {
        const bool zero = dv.data[i] == 0.0;
        if (!zero) CHECK(dv.data[i] == doctest::Approx(av.data[i] * 2.0));
    }
}
