// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/nn.hpp"

#include <cmath>
#include <map>
#include <utility>

namespace dualflow {

Tensor sinusoidal_positions(int length, int dim) {
    // hot path during batch assembly; memoize per (length, dim)
    static std::map<std::pair<int, int>, Tensor> cache;
    auto it = cache.find({length, dim});
    if (it != cache.end()) return it->second;

    Tensor pe(length, dim);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
            pe.at(pos, i) = std::sin(pos * freq);
            if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(pos * freq);
        }
    }
    if (cache.size() < 64) cache[{length, dim}] = pe;
    return pe;
}

Tensor timestep_embedding(double t, int dim) {
    Tensor pe(1, dim);
    const double pos = 100.0 * t;
    for (int i = 0; i < dim; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
        pe.at(0, i) = std::sin(pos * freq);
        if (i + 1 < dim) pe.at(0, i + 1) = std::cos(pos * freq);
    }
    return pe;
}

MaskPtr build_causal_mask(int t_query, int t_key, int look_ahead) {
    require(t_query >= 1 && t_key >= 1, "build_causal_mask: sizes must be >= 1");
    require(look_ahead >= 0, "build_causal_mask: look-ahead must be >= 0");
    auto mask = std::make_shared<std::vector<uint8_t>>(
        static_cast<size_t>(t_query) * static_cast<size_t>(t_key));
    for (int i = 0; i < t_query; ++i)
        for (int j = 0; j < t_key; ++j)
            (*mask)[static_cast<size_t>(i) * t_key + j] = (j <= i + look_ahead) ? 1 : 0;
    return mask;
}

AttentionSite make_attention_site(ParamStore& store, const std::string& prefix, int dim, Rng& rng,
                                  double stddev) {
    AttentionSite s;
    s.wq = &store.create(prefix + ".wq", dim, dim, rng, stddev);
    s.wk = &store.create(prefix + ".wk", dim, dim, rng, stddev);
    s.wv = &store.create(prefix + ".wv", dim, dim, rng, stddev);
    s.wo = &store.create(prefix + ".wo", dim, dim, rng, stddev);
    return s;
}

Var multihead_attention(Tape& tape, Var q_in, Var kv_in, const AttentionSite& site, int n_heads,
                        const MaskPtr& mask, double dropout_p, Rng* drop_rng) {
    const int dim = q_in.cols();
    require(kv_in.cols() == dim, "attention: query/key dimension mismatch");
    require(dim % n_heads == 0, "attention: dim must be divisible by heads");
    const int head_dim = dim / n_heads;
    if (mask)
        require(static_cast<int>(mask->size()) == q_in.rows() * kv_in.rows(),
                "attention: mask shape mismatch");

    Var q = matmul(q_in, tape.param(*site.wq));
    Var k = matmul(kv_in, tape.param(*site.wk));
    Var v = matmul(kv_in, tape.param(*site.wv));

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Var> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Var qh = slice_cols(q, h * head_dim, (h + 1) * head_dim);
        Var kh = slice_cols(k, h * head_dim, (h + 1) * head_dim);
        Var vh = slice_cols(v, h * head_dim, (h + 1) * head_dim);
        Var scores = scale(matmul_nt(qh, kh), inv_sqrt);
        Var weights = softmax_rows(scores, mask);
        if (drop_rng != nullptr && dropout_p > 0.0) weights = dropout(weights, dropout_p, *drop_rng);
        heads.push_back(matmul(weights, vh));
    }
    Var merged = n_heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(merged, tape.param(*site.wo));
}

FfnSite make_ffn_site(ParamStore& store, const std::string& prefix, int dim, int hidden, Rng& rng,
                      double stddev) {
    FfnSite s;
    s.w1 = &store.create(prefix + ".w1", dim, hidden, rng, stddev);
    s.b1 = &store.create_zeros(prefix + ".b1", 1, hidden);
    s.w2 = &store.create(prefix + ".w2", hidden, dim, rng, stddev);
    s.b2 = &store.create_zeros(prefix + ".b2", 1, dim);
    return s;
}

Var ffn_forward(Tape& tape, Var x, const FfnSite& site, double dropout_p, Rng* drop_rng) {
    Var h = gelu(add_rowvec(matmul(x, tape.param(*site.w1)), tape.param(*site.b1)));
    if (drop_rng != nullptr && dropout_p > 0.0) h = dropout(h, dropout_p, *drop_rng);
    return add_rowvec(matmul(h, tape.param(*site.w2)), tape.param(*site.b2));
}

CondNormSite make_cond_norm_site(ParamStore& store, const std::string& prefix, int dim) {
    CondNormSite s;
    // zero-initialized so an untrained site is a plain normalization
    s.w_scale = &store.create_zeros(prefix + ".wscale", dim, dim);
    s.b_scale = &store.create_zeros(prefix + ".bscale", 1, dim);
    s.w_shift = &store.create_zeros(prefix + ".wshift", dim, dim);
    s.b_shift = &store.create_zeros(prefix + ".bshift", 1, dim);
    return s;
}

Var conditioned_norm(Tape& tape, Var z, Var z_d, const CondNormSite& site) {
    require(z_d.rows() == 1 && z_d.cols() == z.cols(),
            "conditioned_norm: text latent shape mismatch");
    Var normalized = norm_rows(z);
    Var scale_row = add_rowvec(matmul(z_d, tape.param(*site.w_scale)), tape.param(*site.b_scale));
    Var shift_row = add_rowvec(matmul(z_d, tape.param(*site.w_shift)), tape.param(*site.b_shift));
    Var ones = tape.constant(Tensor::full(1, z.cols(), 1.0));
    return add_rowvec(mul_rowvec(normalized, add(scale_row, ones)), shift_row);
}

LinearSite make_linear_site(ParamStore& store, const std::string& prefix, int in_dim, int out_dim,
                            Rng& rng, double stddev) {
    LinearSite s;
    s.w = &store.create(prefix + ".w", in_dim, out_dim, rng, stddev);
    s.b = &store.create_zeros(prefix + ".b", 1, out_dim);
    return s;
}

Var linear_forward(Tape& tape, Var x, const LinearSite& site) {
    return add_rowvec(matmul(x, tape.param(*site.w)), tape.param(*site.b));
}

}  // namespace dualflow
