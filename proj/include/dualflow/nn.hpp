// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dualflow/autograd.hpp"

namespace dualflow {

using MaskPtr = std::shared_ptr<const std::vector<uint8_t>>;

// Sinusoidal position table, one row per position.
Tensor sinusoidal_positions(int length, int dim);

// Timestep embedding for t in [0, 1]: the same sinusoid sampled at t * 100.
Tensor timestep_embedding(double t, int dim);

// Binary causal mask with look-ahead: mask[i][j] = 1 iff j <= i + L.
MaskPtr build_causal_mask(int t_query, int t_key, int look_ahead);

struct AttentionSite {
    Parameter* wq = nullptr;
    Parameter* wk = nullptr;
    Parameter* wv = nullptr;
    Parameter* wo = nullptr;
};

AttentionSite make_attention_site(ParamStore& store, const std::string& prefix, int dim, Rng& rng,
                                  double stddev);

// Multi-head scaled dot-product attention. Heads split the feature dimension;
// rows of attention weights are exact probability distributions over unmasked
// keys (masked keys receive exactly zero weight). Pass drop_rng = nullptr to
// disable dropout.
Var multihead_attention(Tape& tape, Var q_in, Var kv_in, const AttentionSite& site, int n_heads,
                        const MaskPtr& mask, double dropout_p, Rng* drop_rng);

struct FfnSite {
    Parameter* w1 = nullptr;
    Parameter* b1 = nullptr;
    Parameter* w2 = nullptr;
    Parameter* b2 = nullptr;
};

FfnSite make_ffn_site(ParamStore& store, const std::string& prefix, int dim, int hidden, Rng& rng,
                      double stddev);

Var ffn_forward(Tape& tape, Var x, const FfnSite& site, double dropout_p, Rng* drop_rng);

// Conditioned normalization: per-position zero-mean/unit-variance over
// features, then scale/shift rows produced by an affine map of the pooled
// text latent. Zero-initialized projections reduce to plain normalization.
struct CondNormSite {
    Parameter* w_scale = nullptr;
    Parameter* b_scale = nullptr;
    Parameter* w_shift = nullptr;
    Parameter* b_shift = nullptr;
};

CondNormSite make_cond_norm_site(ParamStore& store, const std::string& prefix, int dim);

Var conditioned_norm(Tape& tape, Var z, Var z_d, const CondNormSite& site);

struct LinearSite {
    Parameter* w = nullptr;
    Parameter* b = nullptr;
};

LinearSite make_linear_site(ParamStore& store, const std::string& prefix, int in_dim, int out_dim,
                            Rng& rng, double stddev);

Var linear_forward(Tape& tape, Var x, const LinearSite& site);

}  // namespace dualflow
