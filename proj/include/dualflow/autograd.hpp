// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualflow/errors.hpp"
#include "dualflow/tensor.hpp"

namespace dualflow {

// A named trainable tensor. Gradients accumulate across a tape backward pass;
// the optimizer owns the moment buffers.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    Parameter(std::string n, Tensor v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(Tensor::zeros(value.rows, value.cols)),
          adam_m(Tensor::zeros(value.rows, value.cols)),
          adam_v(Tensor::zeros(value.rows, value.cols)) {}
};

// Insertion-ordered parameter registry. Iteration order is the checkpoint
// serialization order, so it must stay deterministic.
class ParamStore {
public:
    Parameter& create(const std::string& name, int rows, int cols, Rng& rng, double stddev);
    Parameter& create_zeros(const std::string& name, int rows, int cols);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    Parameter* find(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& all() const { return items_; }
    void zero_grads();
    size_t total_values() const;

private:
    std::vector<std::unique_ptr<Parameter>> items_;
    std::unordered_map<std::string, size_t> index_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; invalid after Tape::clear().
struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    bool valid() const { return tape != nullptr && idx >= 0; }
    const Tensor& val() const;
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
    double item() const { return val().item(); }
};

// Backward closure: receives the tape and the index of its own node, reads
// that node's gradient and accumulates into the parents' gradients.
using BackwardFn = std::function<void(Tape&, int)>;

struct TapeNode {
    Tensor value;
    const Tensor* value_view = nullptr;  // parameter leaves alias the store
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    Parameter* param = nullptr;
    BackwardFn backward;

    const Tensor& val() const { return value_view != nullptr ? *value_view : value; }
};

// Reverse-mode tape. Creation order is a topological order, so the backward
// sweep is a single reverse iteration.
class Tape {
public:
    Var constant(Tensor v);
    Var leaf(Tensor v, bool requires_grad);
    Var param(Parameter& p);
    Var make(Tensor value, bool requires_grad, BackwardFn fn);

    TapeNode& node(int i) { return nodes_[static_cast<size_t>(i)]; }
    const TapeNode& node(int i) const { return nodes_[static_cast<size_t>(i)]; }

    // Accumulation target for node i's gradient (allocated on first use).
    Tensor& grad_of(int i);
    bool has_grad(int i) const { return nodes_[static_cast<size_t>(i)].grad_ready; }

    // Backpropagate from a scalar root; flows leaf gradients into Parameters.
    void backward(Var root);

    // Inference mode: nodes are created without gradient bookkeeping.
    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
    bool grad_enabled() const { return grad_enabled_; }

    size_t size() const { return nodes_.size(); }
    void clear();

private:
    std::vector<TapeNode> nodes_;
    bool grad_enabled_ = true;
};

bool requires_any(std::initializer_list<Var> vars);

// --- elementwise / shape ops -------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a * s with a learnable scalar s (shape [1 x 1])
Var scale_by(Var a, Var s);
Var add_rowvec(Var a, Var r);
Var mul_rowvec(Var a, Var r);
Var add_const(Var a, const Tensor& c);
Var mul_const(Var a, const Tensor& c);
Var gelu(Var a);
Var relu(Var a);
Var abs_val(Var a);
// elementwise natural log of max(x, floor)
Var log_val(Var a, double floor = 1e-12);
Var sqrt_val(Var a);
Var tile_rows(Var r, int t);
Var slice_cols(Var a, int c0, int c1);
Var slice_rows(Var a, int r0, int r1);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var table, std::vector<int> ids);
Var dropout(Var a, double p, Rng& rng);

// --- contractions ------------------------------------------------------------
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);

// --- reductions --------------------------------------------------------------
Var mean_rows(Var a);
Var sum_all(Var a);
Var mean_all(Var a);

// --- normalization / attention pieces ----------------------------------------
Var norm_rows(Var a, double eps = 1e-5);
// y = x / max(||x||, eps) per row
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var softmax_rows(Var scores, std::shared_ptr<const std::vector<uint8_t>> mask);

// --- vector geometry ----------------------------------------------------------
// Cosine similarity of the flattened tensors. A zero-norm side yields value 0
// (orthogonal convention) with no gradient; `zero_norm_hit` reports it.
Var cosine_sim_flat(Var a, Var b, bool* zero_norm_hit = nullptr);

// --- convolution ---------------------------------------------------------------
// x: [T x C_in]; w: [C_out x (kernel*C_in)] tap-major; bias: [1 x C_out].
Var conv1d(Var x, Var w, Var bias, int kernel);

}  // namespace dualflow
