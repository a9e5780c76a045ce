// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "dualflow/encoders.hpp"
#include "dualflow/losses.hpp"
#include "dualflow/metrics.hpp"
#include "dualflow/model.hpp"
#include "dualflow/sampler.hpp"
#include "dualflow/synth.hpp"
#include "dualflow/train.hpp"

namespace dualflow {

// Flat configuration with dotted keys ("key = value" files). Defaults are the
// published full-scale values; the built-in "desk" profile shrinks them to
// laptop scale. Precedence: defaults < profile < file keys < overrides.
struct RunConfig {
    std::string profile = "paper";

    // runtime
    int runtime_threads = 0;  // 0 = library default

    // data
    int data_n_clips = 128;
    int data_n_frames = 300;
    double data_fps = 30.0;
    double data_tempo_min = 90.0;
    double data_tempo_max = 150.0;
    uint64_t data_seed = 0;
    int data_music_dim = 4800;
    double data_noise_scale = 0.1;
    std::vector<std::string> data_genres = {"waltz", "jive", "salsa"};
    std::vector<std::string> data_interactions = {"closed hold", "spin", "approach"};

    // model
    int model_n_blocks = 20;
    int model_latent_dim = 512;
    int model_n_heads = 8;
    int model_ffn_dim = 1024;
    double model_dropout = 0.1;
    std::vector<int> model_conv_kernels = {7, 11, 21};
    int model_look_ahead = 10;
    std::string model_mode = "interactive";
    int model_text_embed_dim = 768;

    // retrieval
    int retrieval_k = 2;
    double retrieval_lambda_len = 1.0;

    // loss
    double loss_lambda_triplet = 0.1;
    double loss_margin = 0.5;
    double loss_lambda_vel = 30.0;
    double loss_lambda_foot = 30.0;
    double loss_lambda_bl = 10.0;
    double loss_lambda_dm = 3.0;
    double loss_lambda_ro = 0.01;
    double loss_lambda_sync = 5.0;
    double loss_lambda_geo = 1.0;
    double loss_lambda_inter = 1.0;
    double loss_tau = 1.0;
    double loss_end_effector_weight = 2.0;
    double loss_contact_radius = 1.0;

    // train
    double train_lr = 2e-4;
    double train_weight_decay = 2e-5;
    int train_warmup_steps = 1000;
    int train_batch_size = 32;
    int train_steps = 0;  // 0: derived from epochs
    int train_epochs = 5000;
    uint64_t train_seed = 0;
    double train_p_both = 0.10;
    double train_p_text = 0.20;
    double train_p_music = 0.20;

    // sample
    int sample_steps = 200;
    std::string sample_schedule = "cosine";
    double sample_guidance_scale = 1.0;
    uint64_t sample_seed = 0;
    int sample_n_frames = 0;  // 0: data.n_frames

    // eval
    double eval_sigma = 0.1;
    int eval_feature_dim = 32;
    uint64_t eval_metric_seed = 0;
    int eval_train_steps = 300;
    int eval_n_pairs = 1000;
    int eval_smoothing_window = 3;
    int eval_samples_per_condition = 2;

    // io wiring (echoed so a run reproduces from its config echo alone)
    std::string run_out;
    std::string run_dataset;
    std::string run_index;
    std::string run_checkpoint;
    std::string run_evaluator;
    std::string run_text;
    std::string run_music;
    std::string run_actor;

    // --- derived module configs (each runs its own validation) -------------
    GeneratorConfig generator_config() const;
    ModelConfig model_config() const;
    EncoderConfig encoder_config() const;
    LossWeights loss_weights() const;
    TrainConfig train_config(int dataset_size) const;
    SamplerConfig sampler_config() const;
    EvaluatorConfig evaluator_config() const;

    int resolved_train_steps(int dataset_size) const;
    int resolved_sample_frames() const { return sample_n_frames > 0 ? sample_n_frames : data_n_frames; }

    // Validates every field against its module's constraints.
    void validate() const;

    // Full resolved echo, one "key = value" per line, keys sorted.
    std::string echo() const;
};

// Sets one dotted key; unknown keys are rejected naming the key.
void config_set(RunConfig& config, const std::string& key, const std::string& value);

// defaults <- profile <- file <- overrides. Empty path = no file. Overrides
// are "key=value" strings. The result is validated.
RunConfig config_load(const std::string& path, const std::vector<std::string>& overrides);

// Parses config text (for tests and in-memory echoes).
RunConfig config_parse(const std::string& text, const std::vector<std::string>& overrides);

const char* build_id();

}  // namespace dualflow
