// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/autograd.hpp"

#include <cmath>
#include <cstring>

#include "dualflow/kernels.hpp"

namespace dualflow {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

Parameter& ParamStore::create(const std::string& name, int rows, int cols, Rng& rng,
                              double stddev) {
    require(index_.find(name) == index_.end(), "ParamStore: duplicate parameter '" + name + "'");
    index_[name] = items_.size();
    items_.push_back(std::make_unique<Parameter>(name, Tensor::randn(rows, cols, rng, stddev)));
    return *items_.back();
}

Parameter& ParamStore::create_zeros(const std::string& name, int rows, int cols) {
    require(index_.find(name) == index_.end(), "ParamStore: duplicate parameter '" + name + "'");
    index_[name] = items_.size();
    items_.push_back(std::make_unique<Parameter>(name, Tensor::zeros(rows, cols)));
    return *items_.back();
}

Parameter& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '" + name + "'");
    return *items_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '" + name + "'");
    return *items_[it->second];
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : items_[it->second].get();
}

void ParamStore::zero_grads() {
    for (auto& p : items_) p->grad.fill(0.0);
}

size_t ParamStore::total_values() const {
    size_t n = 0;
    for (const auto& p : items_) n += p->value.size();
    return n;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

const Tensor& Var::val() const { return tape->node(idx).val(); }

Var Tape::constant(Tensor v) { return leaf(std::move(v), false); }

Var Tape::leaf(Tensor v, bool requires_grad) {
    TapeNode n;
    n.value = std::move(v);
    n.requires_grad = requires_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
    TapeNode n;
    n.value_view = &p.value;  // alias, not a copy; the store outlives the tape
    n.requires_grad = grad_enabled_;
    n.param = grad_enabled_ ? &p : nullptr;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make(Tensor value, bool requires_grad, BackwardFn fn) {
    TapeNode n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_of(int i) {
    TapeNode& n = nodes_[static_cast<size_t>(i)];
    if (!n.grad_ready) {
        n.grad = Tensor::zeros(n.val().rows, n.val().cols);
        n.grad_ready = true;
    }
    return n.grad;
}

void Tape::backward(Var root) {
    require(root.tape == this, "Tape::backward: root from another tape");
    const TapeNode& r = node(root.idx);
    require(r.val().rows == 1 && r.val().cols == 1, "Tape::backward: root must be scalar");
    grad_of(root.idx).data[0] = 1.0;
    for (int i = root.idx; i >= 0; --i) {
        TapeNode& n = nodes_[static_cast<size_t>(i)];
        if (n.grad_ready && n.backward) n.backward(*this, i);
    }
    for (auto& n : nodes_) {
        if (n.param != nullptr && n.grad_ready)
            kernels::axpy(1.0, n.grad.data.data(), n.param->grad.data.data(), n.grad.size());
    }
}

void Tape::clear() { nodes_.clear(); }

bool requires_any(std::initializer_list<Var> vars) {
    for (const Var& v : vars)
        if (v.valid() && v.tape->node(v.idx).requires_grad) return true;
    return false;
}

namespace {

bool needs(Tape& t, int idx) { return idx >= 0 && t.node(idx).requires_grad; }

void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.val().same_shape(b.val()),
            std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
}

void check_same_tape(const Var& a, const Var& b, const char* op) {
    require(a.tape == b.tape, std::string(op) + ": operands on different tapes");
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise / shape ops
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    check_same_shape(a, b, "add");
    Tensor out = a.val();
    kernels::axpy(1.0, b.val().data.data(), out.data.data(), out.size());
    const int ia = a.idx, ib = b.idx;
    return a.tape->make(std::move(out), requires_any({a, b}), [ia, ib](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) kernels::axpy(1.0, g.data.data(), t.grad_of(ia).data.data(), g.size());
        if (needs(t, ib)) kernels::axpy(1.0, g.data.data(), t.grad_of(ib).data.data(), g.size());
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    check_same_shape(a, b, "sub");
    Tensor out = a.val();
    kernels::axpy(-1.0, b.val().data.data(), out.data.data(), out.size());
    const int ia = a.idx, ib = b.idx;
    return a.tape->make(std::move(out), requires_any({a, b}), [ia, ib](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) kernels::axpy(1.0, g.data.data(), t.grad_of(ia).data.data(), g.size());
        if (needs(t, ib)) kernels::axpy(-1.0, g.data.data(), t.grad_of(ib).data.data(), g.size());
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    check_same_shape(a, b, "mul");
    Tensor out(a.rows(), a.cols());
    const Tensor &av = a.val(), &bv = b.val();
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
    const int ia = a.idx, ib = b.idx;
    return a.tape->make(std::move(out), requires_any({a, b}), [ia, ib](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& av2 = t.node(ia).val();
        const Tensor& bv2 = t.node(ib).val();
        if (needs(t, ia)) {
            Tensor& da = t.grad_of(ia);
            for (size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * bv2.data[i];
        }
        if (needs(t, ib)) {
            Tensor& db = t.grad_of(ib);
            for (size_t i = 0; i < g.size(); ++i) db.data[i] += g.data[i] * av2.data[i];
        }
    });
}

Var scale(Var a, double s) {
    Tensor out = a.val();
    for (auto& x : out.data) x *= s;
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia, s](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) kernels::axpy(s, g.data.data(), t.grad_of(ia).data.data(), g.size());
    });
}

Var scale_by(Var a, Var s) {
    check_same_tape(a, s, "scale_by");
    require(s.rows() == 1 && s.cols() == 1, "scale_by: scale must be a 1x1 tensor");
    const double sv = s.val().data[0];
    Tensor out = a.val();
    for (auto& x : out.data) x *= sv;
    const int ia = a.idx, is = s.idx;
    return a.tape->make(std::move(out), requires_any({a, s}), [ia, is, sv](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) kernels::axpy(sv, g.data.data(), t.grad_of(ia).data.data(), g.size());
        if (needs(t, is)) {
            const Tensor& av = t.node(ia).val();
            double acc = 0;
            for (size_t i = 0; i < g.size(); ++i) acc += g.data[i] * av.data[i];
            t.grad_of(is).data[0] += acc;
        }
    });
}

Var add_rowvec(Var a, Var r) {
    check_same_tape(a, r, "add_rowvec");
    require(r.rows() == 1 && r.cols() == a.cols(), "add_rowvec: row vector shape mismatch");
    Tensor out = a.val();
    const Tensor& rv = r.val();
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += rv.data[static_cast<size_t>(j)];
    const int ia = a.idx, ir = r.idx;
    return a.tape->make(std::move(out), requires_any({a, r}), [ia, ir](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) kernels::axpy(1.0, g.data.data(), t.grad_of(ia).data.data(), g.size());
        if (needs(t, ir)) {
            Tensor& dr = t.grad_of(ir);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) dr.data[static_cast<size_t>(j)] += g.at(i, j);
        }
    });
}

Var mul_rowvec(Var a, Var r) {
    check_same_tape(a, r, "mul_rowvec");
    require(r.rows() == 1 && r.cols() == a.cols(), "mul_rowvec: row vector shape mismatch");
    Tensor out = a.val();
    const Tensor& rv = r.val();
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) *= rv.data[static_cast<size_t>(j)];
    const int ia = a.idx, ir = r.idx;
    return a.tape->make(std::move(out), requires_any({a, r}), [ia, ir](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& av = t.node(ia).val();
        const Tensor& rv2 = t.node(ir).val();
        if (needs(t, ia)) {
            Tensor& da = t.grad_of(ia);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j)
                    da.at(i, j) += g.at(i, j) * rv2.data[static_cast<size_t>(j)];
        }
        if (needs(t, ir)) {
            Tensor& dr = t.grad_of(ir);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j)
                    dr.data[static_cast<size_t>(j)] += g.at(i, j) * av.at(i, j);
        }
    });
}

Var add_const(Var a, const Tensor& c) {
    require(a.val().same_shape(c), "add_const: shape mismatch");
    Tensor out = a.val();
    kernels::axpy(1.0, c.data.data(), out.data.data(), out.size());
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) kernels::axpy(1.0, g.data.data(), t.grad_of(ia).data.data(), g.size());
    });
}

Var mul_const(Var a, const Tensor& c) {
    require(a.val().same_shape(c), "mul_const: shape mismatch");
    Tensor out = a.val();
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= c.data[i];
    const int ia = a.idx;
    auto cc = std::make_shared<Tensor>(c);
    return a.tape->make(std::move(out), requires_any({a}), [ia, cc](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia)) {
            Tensor& da = t.grad_of(ia);
            for (size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * cc->data[i];
        }
    });
}

Var gelu(Var a) {
    Tensor out(a.rows(), a.cols());
    kernels::gelu(a.val().data.data(), out.data.data(), out.size());
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        kernels::gelu_grad(t.node(ia).val().data.data(), g.data.data(),
                           t.grad_of(ia).data.data(), g.size());
    });
}

Var relu(Var a) {
    Tensor out = a.val();
    for (auto& x : out.data) x = x > 0 ? x : 0.0;
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        const Tensor& av = t.node(ia).val();
        Tensor& da = t.grad_of(ia);
        for (size_t i = 0; i < g.size(); ++i)
            if (av.data[i] > 0) da.data[i] += g.data[i];
    });
}

Var log_val(Var a, double floor) {
    Tensor out = a.val();
    for (auto& x : out.data) x = std::log(std::max(x, floor));
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia, floor](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        const Tensor& av = t.node(ia).val();
        Tensor& da = t.grad_of(ia);
        for (size_t i = 0; i < g.size(); ++i)
            if (av.data[i] > floor) da.data[i] += g.data[i] / av.data[i];
    });
}

Var abs_val(Var a) {
    Tensor out = a.val();
    for (auto& x : out.data) x = std::abs(x);
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        const Tensor& av = t.node(ia).val();
        Tensor& da = t.grad_of(ia);
        for (size_t i = 0; i < g.size(); ++i) {
            const double s = av.data[i] > 0 ? 1.0 : (av.data[i] < 0 ? -1.0 : 0.0);
            da.data[i] += g.data[i] * s;
        }
    });
}

Var sqrt_val(Var a) {
    Tensor out = a.val();
    for (auto& x : out.data) x = x > 0 ? std::sqrt(x) : 0.0;
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        const Tensor& y_val = t.node(self).val();
        Tensor& da = t.grad_of(ia);
        for (size_t i = 0; i < g.size(); ++i)
            if (y_val.data[i] > 0) da.data[i] += g.data[i] * 0.5 / y_val.data[i];
    });
}

Var tile_rows(Var r, int t_rows) {
    require(r.rows() == 1, "tile_rows: input must be a single row");
    Tensor out(t_rows, r.cols());
    for (int i = 0; i < t_rows; ++i)
        std::memcpy(out.row(i), r.val().row(0), sizeof(double) * r.cols());
    const int ir = r.idx;
    return r.tape->make(std::move(out), requires_any({r}), [ir](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ir)) return;
        Tensor& dr = t.grad_of(ir);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) dr.data[static_cast<size_t>(j)] += g.at(i, j);
    });
}

Var slice_cols(Var a, int c0, int c1) {
    require(0 <= c0 && c0 < c1 && c1 <= a.cols(), "slice_cols: range out of bounds");
    Tensor out(a.rows(), c1 - c0);
    for (int i = 0; i < out.rows; ++i)
        std::memcpy(out.row(i), a.val().row(i) + c0, sizeof(double) * out.cols);
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia, c0](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        Tensor& da = t.grad_of(ia);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) da.at(i, c0 + j) += g.at(i, j);
    });
}

Var slice_rows(Var a, int r0, int r1) {
    require(0 <= r0 && r0 < r1 && r1 <= a.rows(), "slice_rows: range out of bounds");
    Tensor out(r1 - r0, a.cols());
    std::memcpy(out.data.data(), a.val().row(r0), sizeof(double) * out.size());
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia, r0](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        Tensor& da = t.grad_of(ia);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) da.at(r0 + i, j) += g.at(i, j);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    int total = 0;
    const int rows = parts[0].rows();
    bool req = false;
    for (const Var& p : parts) {
        require(p.rows() == rows, "concat_cols: row count mismatch");
        total += p.cols();
        req = req || p.tape->node(p.idx).requires_grad;
    }
    Tensor out(rows, total);
    int off = 0;
    for (const Var& p : parts) {
        for (int i = 0; i < rows; ++i)
            std::memcpy(out.row(i) + off, p.val().row(i), sizeof(double) * p.cols());
        off += p.cols();
    }
    std::vector<int> idxs;
    std::vector<int> widths;
    for (const Var& p : parts) {
        idxs.push_back(p.idx);
        widths.push_back(p.cols());
    }
    return parts[0].tape->make(std::move(out), req, [idxs, widths](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        int off2 = 0;
        for (size_t k = 0; k < idxs.size(); ++k) {
            if (needs(t, idxs[k])) {
                Tensor& dp = t.grad_of(idxs[k]);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < widths[k]; ++j) dp.at(i, j) += g.at(i, off2 + j);
            }
            off2 += widths[k];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: empty input");
    int total = 0;
    const int cols = parts[0].cols();
    bool req = false;
    for (const Var& p : parts) {
        require(p.cols() == cols, "concat_rows: column count mismatch");
        total += p.rows();
        req = req || p.tape->node(p.idx).requires_grad;
    }
    Tensor out(total, cols);
    int off = 0;
    for (const Var& p : parts) {
        std::memcpy(out.row(off), p.val().data.data(), sizeof(double) * p.val().size());
        off += p.rows();
    }
    std::vector<int> idxs;
    std::vector<int> heights;
    for (const Var& p : parts) {
        idxs.push_back(p.idx);
        heights.push_back(p.rows());
    }
    return parts[0].tape->make(std::move(out), req, [idxs, heights](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        int off2 = 0;
        for (size_t k = 0; k < idxs.size(); ++k) {
            if (needs(t, idxs[k])) {
                Tensor& dp = t.grad_of(idxs[k]);
                for (int i = 0; i < heights[k]; ++i)
                    for (int j = 0; j < g.cols; ++j) dp.at(i, j) += g.at(off2 + i, j);
            }
            off2 += heights[k];
        }
    });
}

Var gather_rows(Var table, std::vector<int> ids) {
    const int cols = table.cols();
    Tensor out(static_cast<int>(ids.size()), cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
        std::memcpy(out.row(static_cast<int>(i)), table.val().row(ids[i]),
                    sizeof(double) * cols);
    }
    const int it = table.idx;
    auto saved = std::make_shared<std::vector<int>>(std::move(ids));
    return table.tape->make(std::move(out), requires_any({table}), [it, saved](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, it)) return;
        Tensor& dt = t.grad_of(it);
        for (size_t i = 0; i < saved->size(); ++i)
            for (int j = 0; j < g.cols; ++j)
                dt.at((*saved)[i], j) += g.at(static_cast<int>(i), j);
    });
}

Var dropout(Var a, double p, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
    if (p == 0.0) return a;
    auto mask = std::make_shared<std::vector<double>>(a.val().size());
    const double keep = 1.0 / (1.0 - p);
    for (auto& m : *mask) m = rng.uniform() < p ? 0.0 : keep;
    Tensor out = a.val();
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= (*mask)[i];
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia, mask](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        Tensor& da = t.grad_of(ia);
        for (size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * (*mask)[i];
    });
}

// ---------------------------------------------------------------------------
// contractions
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch (" +
                                      std::to_string(a.cols()) + " vs " +
                                      std::to_string(b.rows()) + ")");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n);
    kernels::matmul(a.val().data.data(), b.val().data.data(), out.data.data(), m, k, n);
    const int ia = a.idx, ib = b.idx;
    return a.tape->make(std::move(out), requires_any({a, b}), [ia, ib, m, k, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ia))
            kernels::matmul_nt_acc(g.data.data(), t.node(ib).val().data.data(),
                                   t.grad_of(ia).data.data(), m, n, k);
        if (needs(t, ib))
            kernels::matmul_tn_acc(t.node(ia).val().data.data(), g.data.data(),
                                   t.grad_of(ib).data.data(), k, m, n);
    });
}

Var matmul_nt(Var a, Var b) {
    check_same_tape(a, b, "matmul_nt");
    require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out(m, n);
    kernels::matmul_nt(a.val().data.data(), b.val().data.data(), out.data.data(), m, k, n);
    const int ia = a.idx, ib = b.idx;
    return a.tape->make(std::move(out), requires_any({a, b}), [ia, ib, m, k, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;  // [m x n]
        if (needs(t, ia))
            kernels::matmul_acc(g.data.data(), t.node(ib).val().data.data(),
                                t.grad_of(ia).data.data(), m, n, k);
        if (needs(t, ib))
            kernels::matmul_tn_acc(g.data.data(), t.node(ia).val().data.data(),
                                   t.grad_of(ib).data.data(), n, m, k);
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var mean_rows(Var a) {
    const int rows = a.rows(), cols = a.cols();
    Tensor out(1, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.data[static_cast<size_t>(j)] += a.val().at(i, j);
    for (auto& x : out.data) x /= rows;
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia, rows](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        Tensor& da = t.grad_of(ia);
        const double inv = 1.0 / rows;
        for (int i = 0; i < da.rows; ++i)
            for (int j = 0; j < da.cols; ++j) da.at(i, j) += g.data[static_cast<size_t>(j)] * inv;
    });
}

Var sum_all(Var a) {
    double s = 0;
    for (double v : a.val().data) s += v;
    const int ia = a.idx;
    return a.tape->make(Tensor::scalar(s), requires_any({a}), [ia](Tape& t, int self) {
        const double g = t.node(self).grad.data[0];
        if (!needs(t, ia)) return;
        Tensor& da = t.grad_of(ia);
        for (auto& x : da.data) x += g;
    });
}

Var mean_all(Var a) {
    const double n = static_cast<double>(a.val().size());
    double s = 0;
    for (double v : a.val().data) s += v;
    const int ia = a.idx;
    return a.tape->make(Tensor::scalar(s / n), requires_any({a}), [ia, n](Tape& t, int self) {
        const double g = t.node(self).grad.data[0] / n;
        if (!needs(t, ia)) return;
        Tensor& da = t.grad_of(ia);
        for (auto& x : da.data) x += g;
    });
}

// ---------------------------------------------------------------------------
// normalization / attention pieces
// ---------------------------------------------------------------------------

Var norm_rows(Var a, double eps) {
    const int rows = a.rows(), cols = a.cols();
    Tensor out(rows, cols);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const double* x = a.val().row(i);
        double mu = 0;
        for (int j = 0; j < cols; ++j) mu += x[j];
        mu /= cols;
        double var = 0;
        for (int j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = is;
        double* y = out.row(i);
        for (int j = 0; j < cols; ++j) y[j] = (x[j] - mu) * is;
    }
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}),
                        [ia, inv_std](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        const Tensor& y_val = t.node(self).val();
        Tensor& da = t.grad_of(ia);
        const int cols2 = g.cols;
        for (int i = 0; i < g.rows; ++i) {
            const double* gy = g.row(i);
            const double* y = y_val.row(i);
            double mean_g = 0, mean_gy = 0;
            for (int j = 0; j < cols2; ++j) {
                mean_g += gy[j];
                mean_gy += gy[j] * y[j];
            }
            mean_g /= cols2;
            mean_gy /= cols2;
            const double is = (*inv_std)[static_cast<size_t>(i)];
            double* dst = da.row(i);
            for (int j = 0; j < cols2; ++j) dst[j] += is * (gy[j] - mean_g - y[j] * mean_gy);
        }
    });
}

Var l2_normalize_rows(Var a, double eps) {
    const int rows = a.rows(), cols = a.cols();
    Tensor out(rows, cols);
    auto inv_norm = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const double* x = a.val().row(i);
        const double n = std::max(eps, std::sqrt(kernels::dot(x, x, cols)));
        (*inv_norm)[static_cast<size_t>(i)] = 1.0 / n;
        double* y = out.row(i);
        for (int j = 0; j < cols; ++j) y[j] = x[j] / n;
    }
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}),
                        [ia, inv_norm](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, ia)) return;
        const Tensor& y_val = t.node(self).val();
        Tensor& da = t.grad_of(ia);
        for (int i = 0; i < g.rows; ++i) {
            const double* gy = g.row(i);
            const double* y = y_val.row(i);
            double gdoty = 0;
            for (int j = 0; j < g.cols; ++j) gdoty += gy[j] * y[j];
            const double inv = (*inv_norm)[static_cast<size_t>(i)];
            double* dst = da.row(i);
            for (int j = 0; j < g.cols; ++j) dst[j] += inv * (gy[j] - y[j] * gdoty);
        }
    });
}

Var softmax_rows(Var scores, std::shared_ptr<const std::vector<uint8_t>> mask) {
    const int rows = scores.rows(), cols = scores.cols();
    if (mask) {
        require(static_cast<int>(mask->size()) == rows * cols,
                "softmax_rows: mask shape mismatch");
        for (int i = 0; i < rows; ++i) {
            bool any = false;
            for (int j = 0; j < cols; ++j) any = any || (*mask)[static_cast<size_t>(i) * cols + j];
            require(any, "softmax_rows: query row " + std::to_string(i) +
                             " has no unmasked key (mask misconfigured)");
        }
    }
    Tensor out(rows, cols);
    kernels::softmax_rows(scores.val().data.data(), mask ? mask->data() : nullptr,
                          out.data.data(), rows, cols);
    const int is = scores.idx;
    return scores.tape->make(std::move(out), requires_any({scores}),
                             [is](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!needs(t, is)) return;
        const Tensor& y_val = t.node(self).val();
        Tensor& ds = t.grad_of(is);
        for (int i = 0; i < g.rows; ++i) {
            const double* gy = g.row(i);
            const double* y = y_val.row(i);
            double dotv = 0;
            for (int j = 0; j < g.cols; ++j) dotv += gy[j] * y[j];
            double* dst = ds.row(i);
            for (int j = 0; j < g.cols; ++j) dst[j] += y[j] * (gy[j] - dotv);
        }
    });
}

// ---------------------------------------------------------------------------
// vector geometry
// ---------------------------------------------------------------------------

Var cosine_sim_flat(Var a, Var b, bool* zero_norm_hit) {
    check_same_tape(a, b, "cosine_sim_flat");
    require(a.val().size() == b.val().size(), "cosine_sim_flat: size mismatch");
    const size_t n = a.val().size();
    const double* av = a.val().data.data();
    const double* bv = b.val().data.data();
    const double ab = kernels::dot(av, bv, static_cast<int>(n));
    const double aa = kernels::dot(av, av, static_cast<int>(n));
    const double bb = kernels::dot(bv, bv, static_cast<int>(n));
    if (aa == 0.0 || bb == 0.0) {
        if (zero_norm_hit) *zero_norm_hit = true;
        return a.tape->constant(Tensor::scalar(0.0));
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    const double cosv = ab / (na * nb);
    const int ia = a.idx, ib = b.idx;
    return a.tape->make(Tensor::scalar(cosv), requires_any({a, b}),
                        [ia, ib, ab, aa, bb, na, nb, cosv](Tape& t, int self) {
        const double g = t.node(self).grad.data[0];
        const Tensor& av2 = t.node(ia).val();
        const Tensor& bv2 = t.node(ib).val();
        const double inv = 1.0 / (na * nb);
        if (needs(t, ia)) {
            Tensor& da = t.grad_of(ia);
            for (size_t i = 0; i < da.size(); ++i)
                da.data[i] += g * (bv2.data[i] * inv - cosv * av2.data[i] / aa);
        }
        if (needs(t, ib)) {
            Tensor& db = t.grad_of(ib);
            for (size_t i = 0; i < db.size(); ++i)
                db.data[i] += g * (av2.data[i] * inv - cosv * bv2.data[i] / bb);
        }
    });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

Var conv1d(Var x, Var w, Var bias, int kernel) {
    require(kernel % 2 == 1, "conv1d: kernel size must be odd, got " + std::to_string(kernel));
    const int t_len = x.rows(), c_in = x.cols();
    require(w.cols() == kernel * c_in, "conv1d: weight layout mismatch");
    const int c_out = w.rows();
    require(bias.rows() == 1 && bias.cols() == c_out, "conv1d: bias shape mismatch");
    Tensor out(t_len, c_out);
    kernels::conv1d(x.val().data.data(), w.val().data.data(), bias.val().data.data(),
                    out.data.data(), t_len, c_in, c_out, kernel);
    const int ix = x.idx, iw = w.idx, ibias = bias.idx;
    return x.tape->make(std::move(out), requires_any({x, w, bias}),
                        [ix, iw, ibias, t_len, c_in, c_out, kernel](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (needs(t, ix))
            kernels::conv1d_grad_input(g.data.data(), t.node(iw).val().data.data(),
                                       t.grad_of(ix).data.data(), t_len, c_in, c_out, kernel);
        if (needs(t, iw) || needs(t, ibias)) {
            Tensor scratch_w;
            double* dw_ptr = nullptr;
            double* db_ptr = nullptr;
            if (needs(t, iw)) dw_ptr = t.grad_of(iw).data.data();
            else {
                scratch_w = Tensor::zeros(c_out, kernel * c_in);
                dw_ptr = scratch_w.data.data();
            }
            if (needs(t, ibias)) db_ptr = t.grad_of(ibias).data.data();
            kernels::conv1d_grad_weights(g.data.data(), t.node(ix).val().data.data(), dw_ptr,
                                         db_ptr, t_len, c_in, c_out, kernel);
        }
    });
}

}  // namespace dualflow
