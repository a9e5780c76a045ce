// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dualflow/autograd.hpp"
#include "dualflow/nn.hpp"
#include "dualflow/retrieval.hpp"
#include "dualflow/synth.hpp"

namespace dualflow {

struct EncoderConfig {
    int latent_dim = 64;
    int text_embed_dim = 64;  // internal width of the toy text encoder
    int music_dim = 32;       // expected input feature dimension
    int text_hash_buckets = 256;
    int n_heads = 4;
    double init_stddev = 0.05;
};

// Classifier-free-guidance drop decisions. The joint branch is sampled first
// with p_both; otherwise text and music drop independently.
struct DropFlags {
    bool both_branch = false;
    bool drop_text = false;
    bool drop_music = false;
};

DropFlags cfg_mask(Rng& rng, double p_both, double p_text, double p_music);

// One retrieved exemplar motion, resolved to its frames.
struct Exemplar {
    Channel channel = Channel::S;
    std::shared_ptr<const DuetSequence> motion;
};

// Loads exemplar motions for retrieved sets, caching by clip id. A missing
// clip file aborts naming the clip.
class MotionCache {
public:
    std::shared_ptr<const DuetSequence> get(const Dataset& dataset, int clip_id);

private:
    std::map<int, std::shared_ptr<const DuetSequence>> cache_;
};

std::vector<Exemplar> gather_exemplars(const RetrievedSets& sets, const Dataset& dataset,
                                       MotionCache& cache);

// The three conditioning latents with their drop flags. Vars live on the tape
// used to build the bundle.
struct ConditioningBundle {
    Var z_d;  // [1 x latent]
    Var z_m;  // [T x latent]
    Var z_r;  // [rows x latent]; zero-row sentinel when nothing was retrieved
    DropFlags flags;
};

// Trainable toy encoders producing z_d, z_m and z_R.
class ConditioningEncoders {
public:
    ConditioningEncoders(const EncoderConfig& config, ParamStore& store, Rng& init_rng);

    // Hash-token embeddings -> 2-layer self-attention encoder -> mean pool ->
    // linear projection, plus the additive sinusoidal timestep embedding.
    // Empty (or dropped) text yields the learned null embedding + timestep.
    Var encode_text(Tape& tape, const std::string& text, double timestep_t) const;

    // Linear projection -> 2-layer encoder; length preserved. Positional
    // encodings can be disabled (the encoder is then permutation-equivariant).
    Var encode_music(Tape& tape, const Tensor& music_features, bool positional = true) const;

    Var null_music_latent(Tape& tape, int n_frames) const;

    // Shared linear projection of exemplar frames (persons averaged), plus
    // per-exemplar sinusoidal positions and a per-channel embedding, rows
    // concatenated in channel order S, B, R, M. The projection of each
    // distinct motion is computed once per tape: exemplars repeating across
    // channels (or across clips in a batch) reuse it through `projected`.
    using ProjectionCache = std::map<const DuetSequence*, Var>;
    Var encode_retrieved(Tape& tape, const std::vector<Exemplar>& exemplars,
                         ProjectionCache* projected = nullptr) const;
    Var encode_retrieved(Tape& tape, const RetrievedSets& sets, const Dataset& dataset,
                         MotionCache& cache) const;

    // Full bundle with CFG drops applied (dropped modalities are replaced by
    // their learned null embeddings; z_R is never dropped).
    ConditioningBundle build_bundle(Tape& tape, const std::string& text, double timestep_t,
                                    const Tensor* music_features, int n_frames,
                                    const std::vector<Exemplar>& exemplars,
                                    const DropFlags& flags,
                                    ProjectionCache* projected = nullptr) const;

    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    Parameter* token_table_ = nullptr;
    AttentionSite text_attn_[2];
    FfnSite text_ffn_[2];
    LinearSite text_proj_;
    Parameter* null_text_ = nullptr;

    LinearSite music_proj_;
    AttentionSite music_attn_[2];
    FfnSite music_ffn_[2];
    Parameter* null_music_ = nullptr;

    LinearSite retr_proj_;
    Parameter* channel_embed_ = nullptr;  // [4 x latent]
};

}  // namespace dualflow
