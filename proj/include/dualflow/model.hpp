// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dualflow/encoders.hpp"
#include "dualflow/nn.hpp"

namespace dualflow {

enum class TaskMode { Interactive, Reactive };

TaskMode task_mode_from_name(const std::string& name);
const char* task_mode_name(TaskMode mode);

struct ModelConfig {
    int n_blocks = 2;
    int latent_dim = 64;
    int n_heads = 4;
    int ffn_dim = 128;
    double dropout = 0.1;
    std::vector<int> conv_kernels = {7, 11, 21};
    int look_ahead = 10;
    TaskMode mode = TaskMode::Interactive;
    int joint_count = 22;
    double init_stddev = 0.05;

    int frame_dim() const { return 12 * joint_count - 6 + 4; }
    void validate() const;
};

// Latent state of the two branches flowing through the cascaded blocks.
struct BlockState {
    Var z_a;
    Var z_b;
};

// The velocity-field network: per-person input projections with positional
// encodings, cascaded blocks of multi-scale gated temporal convolution +
// self / music / motion / retrieval attention + FFN (all residual, query
// paths conditioned on the text latent), and per-person output projections.
//
// Interactive mode refines both branches with motion cross-attention tied
// across them. Reactive mode encodes the actor once, holds that latent fixed,
// and replaces motion cross-attention with causal cross-attention over it;
// the actor's velocity block is exactly zero.
class DualFlowModel {
public:
    DualFlowModel(const ModelConfig& config, ParamStore& store, Rng& init_rng);

    struct Output {
        Var v_a;
        Var v_b;
    };

    // x_a, x_b: [T x frame_dim]. In reactive mode x_a is the clean actor
    // motion used only as conditioning. Pass drop_rng = nullptr to disable
    // dropout (all determinism tests run without it).
    Output forward(Tape& tape, const Tensor& x_a, const Tensor& x_b, double t,
                   const ConditioningBundle& bundle, TaskMode mode, Rng* drop_rng = nullptr) const;

    // One block update, exposed for the sublayer probes.
    BlockState block_forward(Tape& tape, int block_index, BlockState state,
                             const ConditioningBundle& bundle, TaskMode mode, Var actor_latent,
                             Rng* drop_rng = nullptr) const;

    // Input projection + positional encoding for the actor branch (the fixed
    // actor latent of reactive mode).
    Var encode_actor(Tape& tape, const Tensor& x_a) const;

    // The multi-scale gated convolution of one branch, exposed for sublayer
    // tests: z + sum_k gate_k * GELU(Conv1D_k(z)).
    Var multiscale_conv_forward(Tape& tape, Var z, int block_index, bool branch_b) const;

    const ModelConfig& config() const { return config_; }

private:
    struct ConvModule {
        std::vector<Parameter*> weights;
        std::vector<Parameter*> biases;
        Parameter* gates = nullptr;  // [1 x n_kernels]
    };

    struct BranchBlock {
        ConvModule conv;
        CondNormSite norm_self, norm_music, norm_motion, norm_retr, norm_ffn;
        AttentionSite self_attn, music_attn, motion_attn, retr_attn;
        FfnSite ffn;
    };

    struct Block {
        BranchBlock a, b;
    };

    Var multiscale_conv(Tape& tape, Var z, const ConvModule& conv) const;
    BranchBlock make_branch(ParamStore& store, const std::string& prefix, Rng& rng) const;

    ModelConfig config_;
    LinearSite in_proj_a_, in_proj_b_, out_proj_a_, out_proj_b_;
    std::vector<Block> blocks_;
};

}  // namespace dualflow
