// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/encoders.hpp"

#include <cctype>

#include "dualflow/container.hpp"
#include "dualflow/errors.hpp"

namespace dualflow {

DropFlags cfg_mask(Rng& rng, double p_both, double p_text, double p_music) {
    require(p_both >= 0 && p_both <= 1 && p_text >= 0 && p_text <= 1 && p_music >= 0 &&
                p_music <= 1,
            "cfg_mask: probabilities must lie in [0, 1]");
    DropFlags f;
    const double u_both = rng.uniform();
    const double u_text = rng.uniform();
    const double u_music = rng.uniform();
    f.both_branch = u_both < p_both;
    f.drop_text = f.both_branch || u_text < p_text;
    f.drop_music = f.both_branch || u_music < p_music;
    return f;
}

std::shared_ptr<const DuetSequence> MotionCache::get(const Dataset& dataset, int clip_id) {
    auto it = cache_.find(clip_id);
    if (it != cache_.end()) return it->second;
    const DatasetRecord* rec = nullptr;
    for (const auto& r : dataset.records)
        if (r.clip_id == clip_id) {
            rec = &r;
            break;
        }
    if (rec == nullptr)
        throw std::runtime_error("retrieval exemplar clip " + std::to_string(clip_id) +
                                 " is not in the dataset");
    std::shared_ptr<const DuetSequence> motion;
    try {
        motion = std::make_shared<DuetSequence>(
            read_motion_container(dataset.root_dir + "/" + rec->motion_path));
    } catch (const std::exception& e) {
        throw std::runtime_error("failed to load exemplar clip " + std::to_string(clip_id) +
                                 ": " + e.what());
    }
    cache_[clip_id] = motion;
    return motion;
}

std::vector<Exemplar> gather_exemplars(const RetrievedSets& sets, const Dataset& dataset,
                                       MotionCache& cache) {
    std::vector<Exemplar> out;
    for (Channel c : kAllChannels)
        for (const ScoredEntry& e : sets.at(c))
            out.push_back(Exemplar{c, cache.get(dataset, e.clip_id)});
    return out;
}

namespace {

std::vector<int> hash_tokens(const std::string& text, int buckets) {
    std::vector<int> ids;
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        ids.push_back(static_cast<int>(Rng::hash_string(token) % static_cast<uint64_t>(buckets)));
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    return ids;
}

// pre-norm residual encoder layer (plain row normalization, unconditioned)
Var encoder_layer(Tape& tape, Var x, const AttentionSite& attn, const FfnSite& ffn, int n_heads) {
    Var normed = norm_rows(x);
    x = add(x, multihead_attention(tape, normed, normed, attn, n_heads, nullptr, 0.0, nullptr));
    x = add(x, ffn_forward(tape, norm_rows(x), ffn, 0.0, nullptr));
    return x;
}

}  // namespace

ConditioningEncoders::ConditioningEncoders(const EncoderConfig& config, ParamStore& store,
                                           Rng& init_rng)
    : config_(config) {
    require(config.latent_dim >= 2 && config.text_embed_dim >= 2,
            "encoders: latent dimensions too small");
    require(config.text_embed_dim % config.n_heads == 0 &&
                config.latent_dim % config.n_heads == 0,
            "encoders: dims must be divisible by n_heads");
    const double sd = config.init_stddev;
    token_table_ = &store.create("enc.text.tokens", config.text_hash_buckets,
                                 config.text_embed_dim, init_rng, sd);
    for (int l = 0; l < 2; ++l) {
        text_attn_[l] = make_attention_site(store, "enc.text.l" + std::to_string(l) + ".attn",
                                            config.text_embed_dim, init_rng, sd);
        text_ffn_[l] = make_ffn_site(store, "enc.text.l" + std::to_string(l) + ".ffn",
                                     config.text_embed_dim, 2 * config.text_embed_dim, init_rng,
                                     sd);
    }
    text_proj_ = make_linear_site(store, "enc.text.proj", config.text_embed_dim,
                                  config.latent_dim, init_rng, sd);
    null_text_ = &store.create("enc.text.null", 1, config.latent_dim, init_rng, sd);

    music_proj_ =
        make_linear_site(store, "enc.music.proj", config.music_dim, config.latent_dim, init_rng, sd);
    for (int l = 0; l < 2; ++l) {
        music_attn_[l] = make_attention_site(store, "enc.music.l" + std::to_string(l) + ".attn",
                                             config.latent_dim, init_rng, sd);
        music_ffn_[l] = make_ffn_site(store, "enc.music.l" + std::to_string(l) + ".ffn",
                                      config.latent_dim, 2 * config.latent_dim, init_rng, sd);
    }
    null_music_ = &store.create("enc.music.null", 1, config.latent_dim, init_rng, sd);

    retr_proj_ = make_linear_site(store, "enc.retr.proj", 262, config.latent_dim, init_rng, sd);
    channel_embed_ = &store.create("enc.retr.channels", 4, config.latent_dim, init_rng, sd);
}

Var ConditioningEncoders::encode_text(Tape& tape, const std::string& text,
                                      double timestep_t) const {
    require(timestep_t >= 0.0 && timestep_t <= 1.0, "encode_text: t must lie in [0, 1]");
    Var time_term = tape.constant(timestep_embedding(timestep_t, config_.latent_dim));
    const std::vector<int> ids = hash_tokens(text, config_.text_hash_buckets);
    if (ids.empty()) return add(tape.param(*null_text_), time_term);

    Var tokens = gather_rows(tape.param(*token_table_), ids);
    tokens = add_const(tokens, sinusoidal_positions(static_cast<int>(ids.size()),
                                                    config_.text_embed_dim));
    for (int l = 0; l < 2; ++l)
        tokens = encoder_layer(tape, tokens, text_attn_[l], text_ffn_[l], config_.n_heads);
    Var pooled = mean_rows(tokens);
    return add(linear_forward(tape, pooled, text_proj_), time_term);
}

Var ConditioningEncoders::encode_music(Tape& tape, const Tensor& music_features,
                                       bool positional) const {
    require(music_features.cols == config_.music_dim,
            "encode_music: feature dimension " + std::to_string(music_features.cols) +
                " does not match configured " + std::to_string(config_.music_dim));
    Var x = linear_forward(tape, tape.constant(music_features), music_proj_);
    if (positional)
        x = add_const(x, sinusoidal_positions(music_features.rows, config_.latent_dim));
    for (int l = 0; l < 2; ++l)
        x = encoder_layer(tape, x, music_attn_[l], music_ffn_[l], config_.n_heads);
    return x;
}

Var ConditioningEncoders::null_music_latent(Tape& tape, int n_frames) const {
    return tile_rows(tape.param(*null_music_), n_frames);
}

Var ConditioningEncoders::encode_retrieved(Tape& tape, const std::vector<Exemplar>& exemplars,
                                           ProjectionCache* projected) const {
    if (exemplars.empty()) return tape.constant(Tensor(0, config_.latent_dim));
    ProjectionCache local;
    ProjectionCache& cache = projected != nullptr ? *projected : local;
    Var weight;  // one parameter node per tape keeps the cache consistent
    std::vector<Var> blocks;
    blocks.reserve(exemplars.size());
    for (Channel c : kAllChannels) {
        for (const Exemplar& ex : exemplars) {
            if (ex.channel != c) continue;
            const DuetSequence& m = *ex.motion;
            auto it = cache.find(&m);
            Var mean;
            if (it != cache.end() && it->second.tape == &tape) {
                mean = it->second;
            } else {
                if (!weight.valid()) weight = tape.param(*retr_proj_.w);
                Var pa = matmul(tape.constant(m.frames_a), weight);
                Var pb = matmul(tape.constant(m.frames_b), weight);
                mean = scale(add(pa, pb), 0.5);
                cache[&m] = mean;
            }
            mean = add_rowvec(mean, tape.param(*retr_proj_.b));
            mean = add_const(mean, sinusoidal_positions(m.n_frames(), config_.latent_dim));
            Var ch = slice_rows(tape.param(*channel_embed_), static_cast<int>(c),
                                static_cast<int>(c) + 1);
            blocks.push_back(add_rowvec(mean, ch));
        }
    }
    return blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
}

Var ConditioningEncoders::encode_retrieved(Tape& tape, const RetrievedSets& sets,
                                           const Dataset& dataset, MotionCache& cache) const {
    return encode_retrieved(tape, gather_exemplars(sets, dataset, cache));
}

ConditioningBundle ConditioningEncoders::build_bundle(Tape& tape, const std::string& text,
                                                      double timestep_t,
                                                      const Tensor* music_features, int n_frames,
                                                      const std::vector<Exemplar>& exemplars,
                                                      const DropFlags& flags,
                                                      ProjectionCache* projected) const {
    ConditioningBundle bundle;
    bundle.flags = flags;
    bundle.z_d = flags.drop_text ? encode_text(tape, "", timestep_t)
                                 : encode_text(tape, text, timestep_t);
    if (flags.drop_music || music_features == nullptr)
        bundle.z_m = null_music_latent(tape, n_frames);
    else
        bundle.z_m = encode_music(tape, *music_features);
    bundle.z_r = encode_retrieved(tape, exemplars, projected);
    return bundle;
}

}  // namespace dualflow
