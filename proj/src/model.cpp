// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/model.hpp"

#include <cmath>

#include "dualflow/errors.hpp"

namespace dualflow {

TaskMode task_mode_from_name(const std::string& name) {
    if (name == "interactive") return TaskMode::Interactive;
    if (name == "reactive") return TaskMode::Reactive;
    throw ValidationError("unknown mode '" + name + "' (expected interactive or reactive)");
}

const char* task_mode_name(TaskMode mode) {
    return mode == TaskMode::Interactive ? "interactive" : "reactive";
}

void ModelConfig::validate() const {
    require(n_blocks >= 1, "model: n_blocks must be >= 1");
    require(latent_dim >= 2, "model: latent_dim must be >= 2");
    require(n_heads >= 1, "model: n_heads must be >= 1");
    require(latent_dim % n_heads == 0,
            "model: latent_dim (" + std::to_string(latent_dim) +
                ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    require(ffn_dim >= 1, "model: ffn_dim must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
    require(!conv_kernels.empty(), "model: conv_kernels must be non-empty");
    for (int k : conv_kernels)
        require(k >= 1 && k % 2 == 1,
                "model: conv kernel sizes must be odd, got " + std::to_string(k));
    require(look_ahead >= 0, "model: look_ahead must be >= 0");
    require(joint_count >= 2, "model: joint_count must be >= 2");
}

DualFlowModel::BranchBlock DualFlowModel::make_branch(ParamStore& store,
                                                      const std::string& prefix, Rng& rng) const {
    const int d = config_.latent_dim;
    const double sd = config_.init_stddev;
    BranchBlock br;
    for (size_t i = 0; i < config_.conv_kernels.size(); ++i) {
        const int k = config_.conv_kernels[i];
        br.conv.weights.push_back(&store.create(prefix + ".conv.k" + std::to_string(k) + ".w", d,
                                                k * d, rng, sd / std::sqrt(static_cast<double>(k))));
        br.conv.biases.push_back(
            &store.create_zeros(prefix + ".conv.k" + std::to_string(k) + ".b", 1, d));
    }
    br.conv.gates = &store.create_zeros(prefix + ".conv.gates", 1,
                                        static_cast<int>(config_.conv_kernels.size()));
    br.norm_self = make_cond_norm_site(store, prefix + ".norm_self", d);
    br.self_attn = make_attention_site(store, prefix + ".self", d, rng, sd);
    br.norm_music = make_cond_norm_site(store, prefix + ".norm_music", d);
    br.music_attn = make_attention_site(store, prefix + ".music", d, rng, sd);
    br.norm_motion = make_cond_norm_site(store, prefix + ".norm_motion", d);
    br.motion_attn = make_attention_site(store, prefix + ".motion", d, rng, sd);
    br.norm_retr = make_cond_norm_site(store, prefix + ".norm_retr", d);
    br.retr_attn = make_attention_site(store, prefix + ".retr", d, rng, sd);
    br.norm_ffn = make_cond_norm_site(store, prefix + ".norm_ffn", d);
    br.ffn = make_ffn_site(store, prefix + ".ffn", d, config_.ffn_dim, rng, sd);
    return br;
}

DualFlowModel::DualFlowModel(const ModelConfig& config, ParamStore& store, Rng& init_rng)
    : config_(config) {
    config_.validate();
    const int d = config_.latent_dim;
    const int fd = config_.frame_dim();
    const double sd = config_.init_stddev;
    in_proj_a_ = make_linear_site(store, "proj_in.a", fd, d, init_rng, sd);
    in_proj_b_ = make_linear_site(store, "proj_in.b", fd, d, init_rng, sd);
    for (int i = 0; i < config_.n_blocks; ++i) {
        Block blk;
        blk.a = make_branch(store, "blk" + std::to_string(i) + ".a", init_rng);
        blk.b = make_branch(store, "blk" + std::to_string(i) + ".b", init_rng);
        blocks_.push_back(std::move(blk));
    }
    out_proj_a_ = make_linear_site(store, "proj_out.a", d, fd, init_rng, sd);
    out_proj_b_ = make_linear_site(store, "proj_out.b", d, fd, init_rng, sd);
}

Var DualFlowModel::multiscale_conv(Tape& tape, Var z, const ConvModule& conv) const {
    Var gates = tape.param(*conv.gates);
    Var out = z;
    for (size_t i = 0; i < config_.conv_kernels.size(); ++i) {
        Var branch = gelu(conv1d(z, tape.param(*conv.weights[i]), tape.param(*conv.biases[i]),
                                 config_.conv_kernels[i]));
        Var gate = slice_cols(gates, static_cast<int>(i), static_cast<int>(i) + 1);
        out = add(out, scale_by(branch, gate));
    }
    return out;
}

BlockState DualFlowModel::block_forward(Tape& tape, int block_index, BlockState state,
                                        const ConditioningBundle& bundle, TaskMode mode,
                                        Var actor_latent, Rng* drop_rng) const {
    require(block_index >= 0 && block_index < static_cast<int>(blocks_.size()),
            "block_forward: block index out of range");
    const Block& blk = blocks_[static_cast<size_t>(block_index)];
    const double p = drop_rng != nullptr ? config_.dropout : 0.0;
    const int heads = config_.n_heads;
    Var z_d = bundle.z_d;

    const bool interactive = mode == TaskMode::Interactive;
    if (!interactive)
        require(actor_latent.valid(), "block_forward: reactive mode requires an actor latent");

    // stage 1: multi-scale gated temporal convolution
    Var a1, b1;
    if (interactive) a1 = multiscale_conv(tape, state.z_a, blk.a.conv);
    b1 = multiscale_conv(tape, state.z_b, blk.b.conv);

    // stage 2: self-attention (keys/values share the conditioned-normed query)
    auto self_stage = [&](Var z, const BranchBlock& br) {
        Var n = conditioned_norm(tape, z, z_d, br.norm_self);
        return add(z, multihead_attention(tape, n, n, br.self_attn, heads, nullptr, p, drop_rng));
    };
    Var a2, b2;
    if (interactive) a2 = self_stage(a1, blk.a);
    b2 = self_stage(b1, blk.b);

    // stage 3: music cross-attention
    auto music_stage = [&](Var z, const BranchBlock& br) {
        Var n = conditioned_norm(tape, z, z_d, br.norm_music);
        return add(z, multihead_attention(tape, n, bundle.z_m, br.music_attn, heads, nullptr, p,
                                          drop_rng));
    };
    Var a3, b3;
    if (interactive) a3 = music_stage(a2, blk.a);
    b3 = music_stage(b2, blk.b);

    // stage 4: motion cross-attention between branches; in reactive mode the
    // reactor attends to the fixed actor latent under the causal mask
    Var a4, b4;
    if (interactive) {
        Var na = conditioned_norm(tape, a3, z_d, blk.a.norm_motion);
        Var nb = conditioned_norm(tape, b3, z_d, blk.b.norm_motion);
        a4 = add(a3, multihead_attention(tape, na, b3, blk.a.motion_attn, heads, nullptr, p,
                                         drop_rng));
        b4 = add(b3, multihead_attention(tape, nb, a3, blk.b.motion_attn, heads, nullptr, p,
                                         drop_rng));
    } else {
        Var nb = conditioned_norm(tape, b3, z_d, blk.b.norm_motion);
        const MaskPtr mask =
            build_causal_mask(b3.rows(), actor_latent.rows(), config_.look_ahead);
        b4 = add(b3, multihead_attention(tape, nb, actor_latent, blk.b.motion_attn, heads, mask,
                                         p, drop_rng));
    }

    // stage 5: retrieval cross-attention (identity when nothing was retrieved)
    auto retr_stage = [&](Var z, const BranchBlock& br) {
        if (bundle.z_r.rows() == 0) return z;
        Var n = conditioned_norm(tape, z, z_d, br.norm_retr);
        return add(z, multihead_attention(tape, n, bundle.z_r, br.retr_attn, heads, nullptr, p,
                                          drop_rng));
    };
    Var a5, b5;
    if (interactive) a5 = retr_stage(a4, blk.a);
    b5 = retr_stage(b4, blk.b);

    // stage 6: feed-forward
    auto ffn_stage = [&](Var z, const BranchBlock& br) {
        return add(z, ffn_forward(tape, conditioned_norm(tape, z, z_d, br.norm_ffn), br.ffn, p,
                                  drop_rng));
    };
    BlockState out;
    if (interactive) out.z_a = ffn_stage(a5, blk.a);
    out.z_b = ffn_stage(b5, blk.b);
    if (!interactive) out.z_a = state.z_a;
    return out;
}

Var DualFlowModel::multiscale_conv_forward(Tape& tape, Var z, int block_index,
                                           bool branch_b) const {
    require(block_index >= 0 && block_index < static_cast<int>(blocks_.size()),
            "multiscale_conv_forward: block index out of range");
    const Block& blk = blocks_[static_cast<size_t>(block_index)];
    return multiscale_conv(tape, z, branch_b ? blk.b.conv : blk.a.conv);
}

Var DualFlowModel::encode_actor(Tape& tape, const Tensor& x_a) const {
    require(x_a.cols == config_.frame_dim(), "encode_actor: frame width mismatch");
    Var z = linear_forward(tape, tape.constant(x_a), in_proj_a_);
    return add_const(z, sinusoidal_positions(x_a.rows, config_.latent_dim));
}

DualFlowModel::Output DualFlowModel::forward(Tape& tape, const Tensor& x_a, const Tensor& x_b,
                                             double t, const ConditioningBundle& bundle,
                                             TaskMode mode, Rng* drop_rng) const {
    const int fd = config_.frame_dim();
    require(x_a.cols == fd && x_b.cols == fd,
            "model_forward: inputs must be T x " + std::to_string(fd));
    require(x_a.rows == x_b.rows, "model_forward: persons have different frame counts");
    require(t >= 0.0 && t <= 1.0, "model_forward: t must lie in [0, 1]");
    require(bundle.z_d.valid() && bundle.z_m.valid(), "model_forward: incomplete bundle");
    require(bundle.z_m.rows() == x_a.rows,
            "model_forward: music latent has " + std::to_string(bundle.z_m.rows()) +
                " rows for " + std::to_string(x_a.rows) + " motion frames");
    const int T = x_a.rows;

    Output out;
    if (mode == TaskMode::Interactive) {
        BlockState state;
        state.z_a = encode_actor(tape, x_a);
        state.z_b = add_const(linear_forward(tape, tape.constant(x_b), in_proj_b_),
                              sinusoidal_positions(T, config_.latent_dim));
        for (int i = 0; i < config_.n_blocks; ++i)
            state = block_forward(tape, i, state, bundle, mode, Var{}, drop_rng);
        out.v_a = linear_forward(tape, state.z_a, out_proj_a_);
        out.v_b = linear_forward(tape, state.z_b, out_proj_b_);
    } else {
        // actor encoded once and held fixed across blocks
        Var actor_latent = encode_actor(tape, x_a);
        BlockState state;
        state.z_a = actor_latent;
        state.z_b = add_const(linear_forward(tape, tape.constant(x_b), in_proj_b_),
                              sinusoidal_positions(T, config_.latent_dim));
        for (int i = 0; i < config_.n_blocks; ++i)
            state = block_forward(tape, i, state, bundle, mode, actor_latent, drop_rng);
        out.v_a = tape.constant(Tensor::zeros(T, fd));  // actor block is exactly zero
        out.v_b = linear_forward(tape, state.z_b, out_proj_b_);
    }
    return out;
}

}  // namespace dualflow
