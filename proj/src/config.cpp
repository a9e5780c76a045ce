// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace dualflow {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        require(pos == value.size(), "config: '" + key + "' has trailing characters");
        return v;
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception&) {
        throw ValidationError("config: '" + key + "' expects a number, got '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    const double v = parse_double(key, value);
    require(v == static_cast<long long>(v),
            "config: '" + key + "' expects an integer, got '" + value + "'");
    return static_cast<int>(v);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        require(pos == value.size(), "config: '" + key + "' has trailing characters");
        return static_cast<uint64_t>(v);
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception&) {
        throw ValidationError("config: '" + key + "' expects an unsigned integer, got '" +
                              value + "'");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string current;
    for (char c : value) {
        if (c == ',') {
            const std::string t = trim(current);
            if (!t.empty()) out.push_back(t);
            current.clear();
        } else {
            current += c;
        }
    }
    const std::string t = trim(current);
    if (!t.empty()) out.push_back(t);
    return out;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ",";
        out += parts[i];
    }
    return out;
}

std::string join(const std::vector<int>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(parts[i]);
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void apply_desk_profile(RunConfig& c) {
    c.model_dropout = 0.0;
    c.model_conv_kernels = {3, 7, 11};
    c.data_n_clips = 16;
    c.data_n_frames = 64;
    c.data_music_dim = 32;
    c.model_n_blocks = 2;
    c.model_latent_dim = 64;
    c.model_n_heads = 4;
    c.model_ffn_dim = 128;
    c.model_text_embed_dim = 64;
    c.train_batch_size = 8;
    c.train_steps = 2000;
    c.train_warmup_steps = 100;
    c.train_lr = 1e-3;
    c.sample_steps = 50;
    c.eval_train_steps = 300;
}

}  // namespace

void config_set(RunConfig& c, const std::string& key, const std::string& value) {
    if (key == "profile") {
        require(value == "paper" || value == "desk",
                "config: unknown profile '" + value + "' (expected paper or desk)");
        c.profile = value;
        return;
    }
    if (key == "runtime.threads") { c.runtime_threads = parse_int(key, value); return; }

    if (key == "data.n_clips") { c.data_n_clips = parse_int(key, value); return; }
    if (key == "data.n_frames") { c.data_n_frames = parse_int(key, value); return; }
    if (key == "data.fps") { c.data_fps = parse_double(key, value); return; }
    if (key == "data.tempo_range") {
        const auto parts = split_list(value);
        require(parts.size() == 2, "config: data.tempo_range expects 'min,max'");
        c.data_tempo_min = parse_double(key, parts[0]);
        c.data_tempo_max = parse_double(key, parts[1]);
        return;
    }
    if (key == "data.seed") { c.data_seed = parse_u64(key, value); return; }
    if (key == "data.music_dim") { c.data_music_dim = parse_int(key, value); return; }
    if (key == "data.noise_scale") { c.data_noise_scale = parse_double(key, value); return; }
    if (key == "data.genres") { c.data_genres = split_list(value); return; }
    if (key == "data.interactions") { c.data_interactions = split_list(value); return; }

    if (key == "model.n_blocks") { c.model_n_blocks = parse_int(key, value); return; }
    if (key == "model.latent_dim") { c.model_latent_dim = parse_int(key, value); return; }
    if (key == "model.n_heads") { c.model_n_heads = parse_int(key, value); return; }
    if (key == "model.ffn_dim") { c.model_ffn_dim = parse_int(key, value); return; }
    if (key == "model.dropout") { c.model_dropout = parse_double(key, value); return; }
    if (key == "model.conv_kernels") {
        c.model_conv_kernels.clear();
        for (const auto& p : split_list(value))
            c.model_conv_kernels.push_back(parse_int(key, p));
        return;
    }
    if (key == "model.look_ahead") { c.model_look_ahead = parse_int(key, value); return; }
    if (key == "model.mode") { c.model_mode = value; return; }
    if (key == "model.text_embed_dim") { c.model_text_embed_dim = parse_int(key, value); return; }

    if (key == "retrieval.k") { c.retrieval_k = parse_int(key, value); return; }
    if (key == "retrieval.lambda_len") { c.retrieval_lambda_len = parse_double(key, value); return; }

    if (key == "loss.lambda_triplet") { c.loss_lambda_triplet = parse_double(key, value); return; }
    if (key == "loss.margin") { c.loss_margin = parse_double(key, value); return; }
    if (key == "loss.lambda_vel") { c.loss_lambda_vel = parse_double(key, value); return; }
    if (key == "loss.lambda_foot") { c.loss_lambda_foot = parse_double(key, value); return; }
    if (key == "loss.lambda_bl") { c.loss_lambda_bl = parse_double(key, value); return; }
    if (key == "loss.lambda_dm") { c.loss_lambda_dm = parse_double(key, value); return; }
    if (key == "loss.lambda_ro") { c.loss_lambda_ro = parse_double(key, value); return; }
    if (key == "loss.lambda_sync") { c.loss_lambda_sync = parse_double(key, value); return; }
    if (key == "loss.lambda_geo") { c.loss_lambda_geo = parse_double(key, value); return; }
    if (key == "loss.lambda_inter") { c.loss_lambda_inter = parse_double(key, value); return; }
    if (key == "loss.tau") { c.loss_tau = parse_double(key, value); return; }
    if (key == "loss.end_effector_weight") {
        c.loss_end_effector_weight = parse_double(key, value);
        return;
    }
    if (key == "loss.contact_radius") { c.loss_contact_radius = parse_double(key, value); return; }

    if (key == "train.lr") { c.train_lr = parse_double(key, value); return; }
    if (key == "train.weight_decay") { c.train_weight_decay = parse_double(key, value); return; }
    if (key == "train.warmup_steps") { c.train_warmup_steps = parse_int(key, value); return; }
    if (key == "train.batch_size") { c.train_batch_size = parse_int(key, value); return; }
    if (key == "train.steps") { c.train_steps = parse_int(key, value); return; }
    if (key == "train.epochs") { c.train_epochs = parse_int(key, value); return; }
    if (key == "train.seed") { c.train_seed = parse_u64(key, value); return; }
    if (key == "train.p_both") { c.train_p_both = parse_double(key, value); return; }
    if (key == "train.p_text") { c.train_p_text = parse_double(key, value); return; }
    if (key == "train.p_music") { c.train_p_music = parse_double(key, value); return; }

    if (key == "sample.steps") { c.sample_steps = parse_int(key, value); return; }
    if (key == "sample.schedule") { c.sample_schedule = value; return; }
    if (key == "sample.guidance_scale") {
        c.sample_guidance_scale = parse_double(key, value);
        return;
    }
    if (key == "sample.seed") { c.sample_seed = parse_u64(key, value); return; }
    if (key == "sample.n_frames") { c.sample_n_frames = parse_int(key, value); return; }

    if (key == "eval.sigma") { c.eval_sigma = parse_double(key, value); return; }
    if (key == "eval.feature_dim") { c.eval_feature_dim = parse_int(key, value); return; }
    if (key == "eval.metric_seed") { c.eval_metric_seed = parse_u64(key, value); return; }
    if (key == "eval.train_steps") { c.eval_train_steps = parse_int(key, value); return; }
    if (key == "eval.n_pairs") { c.eval_n_pairs = parse_int(key, value); return; }
    if (key == "eval.smoothing_window") {
        c.eval_smoothing_window = parse_int(key, value);
        return;
    }
    if (key == "eval.samples_per_condition") {
        c.eval_samples_per_condition = parse_int(key, value);
        return;
    }

    if (key == "run.out") { c.run_out = value; return; }
    if (key == "run.dataset") { c.run_dataset = value; return; }
    if (key == "run.index") { c.run_index = value; return; }
    if (key == "run.checkpoint") { c.run_checkpoint = value; return; }
    if (key == "run.evaluator") { c.run_evaluator = value; return; }
    if (key == "run.text") { c.run_text = value; return; }
    if (key == "run.music") { c.run_music = value; return; }
    if (key == "run.actor") { c.run_actor = value; return; }

    throw ValidationError("config: unknown key '" + key + "'");
}

GeneratorConfig RunConfig::generator_config() const {
    GeneratorConfig g;
    g.n_frames = data_n_frames;
    g.fps = data_fps;
    g.tempo_min = data_tempo_min;
    g.tempo_max = data_tempo_max;
    g.genres = data_genres;
    g.interactions = data_interactions;
    g.noise_scale = data_noise_scale;
    g.seed = data_seed;
    g.music_dim = data_music_dim;
    return g;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.n_blocks = model_n_blocks;
    m.latent_dim = model_latent_dim;
    m.n_heads = model_n_heads;
    m.ffn_dim = model_ffn_dim;
    m.dropout = model_dropout;
    m.conv_kernels = model_conv_kernels;
    m.look_ahead = model_look_ahead;
    m.mode = task_mode_from_name(model_mode);
    return m;
}

EncoderConfig RunConfig::encoder_config() const {
    EncoderConfig e;
    e.latent_dim = model_latent_dim;
    e.text_embed_dim = model_text_embed_dim;
    e.music_dim = data_music_dim;
    e.n_heads = model_n_heads;
    return e;
}

LossWeights RunConfig::loss_weights() const {
    LossWeights w;
    w.lambda_triplet = loss_lambda_triplet;
    w.margin = loss_margin;
    w.lambda_vel = loss_lambda_vel;
    w.lambda_foot = loss_lambda_foot;
    w.lambda_bl = loss_lambda_bl;
    w.lambda_dm = loss_lambda_dm;
    w.lambda_ro = loss_lambda_ro;
    w.lambda_sync = loss_lambda_sync;
    w.lambda_geo = loss_lambda_geo;
    w.lambda_inter = loss_lambda_inter;
    w.tau = loss_tau;
    w.end_effector_weight = loss_end_effector_weight;
    w.contact_radius = loss_contact_radius;
    return w;
}

int RunConfig::resolved_train_steps(int dataset_size) const {
    if (train_steps > 0) return train_steps;
    const int batch = std::max(1, std::min(train_batch_size, dataset_size));
    const int batches_per_epoch = std::max(1, (dataset_size + batch - 1) / batch);
    return train_epochs * batches_per_epoch;
}

TrainConfig RunConfig::train_config(int dataset_size) const {
    TrainConfig t;
    t.lr = train_lr;
    t.weight_decay = train_weight_decay;
    t.warmup_steps = train_warmup_steps;
    t.batch_size = train_batch_size;
    t.steps = resolved_train_steps(dataset_size);
    t.seed = train_seed;
    t.retrieval_k = retrieval_k;
    t.lambda_len = retrieval_lambda_len;
    t.p_both = train_p_both;
    t.p_text = train_p_text;
    t.p_music = train_p_music;
    return t;
}

SamplerConfig RunConfig::sampler_config() const {
    SamplerConfig s;
    s.steps = sample_steps;
    s.schedule = schedule_from_name(sample_schedule);
    s.guidance_scale = sample_guidance_scale;
    s.mode = task_mode_from_name(model_mode);
    s.seed = sample_seed;
    return s;
}

EvaluatorConfig RunConfig::evaluator_config() const {
    EvaluatorConfig e;
    e.feature_dim = eval_feature_dim;
    e.train_steps = eval_train_steps;
    e.seed = eval_metric_seed;
    return e;
}

void RunConfig::validate() const {
    generator_config().validate();
    model_config().validate();
    loss_weights().validate();
    train_config(std::max(1, data_n_clips)).validate();
    sampler_config().validate();
    require(runtime_threads >= 0, "config: runtime.threads must be >= 0");
    require(retrieval_k >= 1, "config: retrieval.k must be >= 1");
    require(retrieval_lambda_len >= 0, "config: retrieval.lambda_len must be >= 0");
    require(data_n_clips >= 1, "config: data.n_clips must be >= 1");
    require(eval_sigma > 0, "config: eval.sigma must be positive");
    require(eval_feature_dim >= 1, "config: eval.feature_dim must be >= 1");
    require(eval_n_pairs >= 1, "config: eval.n_pairs must be >= 1");
    require(eval_smoothing_window >= 1 && eval_smoothing_window % 2 == 1,
            "config: eval.smoothing_window must be odd");
    require(eval_samples_per_condition >= 1,
            "config: eval.samples_per_condition must be >= 1");
    require(model_text_embed_dim >= 2 && model_text_embed_dim % model_n_heads == 0,
            "config: model.text_embed_dim must be divisible by model.n_heads");
    require(sample_n_frames >= 0, "config: sample.n_frames must be >= 0");
    require(train_steps >= 0, "config: train.steps must be >= 0");
    require(train_epochs >= 1 || train_steps > 0,
            "config: train.epochs must be >= 1 when train.steps is unset");
}

std::string RunConfig::echo() const {
    std::vector<std::pair<std::string, std::string>> kv = {
        {"profile", profile},
        {"runtime.threads", std::to_string(runtime_threads)},
        {"data.n_clips", std::to_string(data_n_clips)},
        {"data.n_frames", std::to_string(data_n_frames)},
        {"data.fps", fmt(data_fps)},
        {"data.tempo_range", fmt(data_tempo_min) + "," + fmt(data_tempo_max)},
        {"data.seed", std::to_string(data_seed)},
        {"data.music_dim", std::to_string(data_music_dim)},
        {"data.noise_scale", fmt(data_noise_scale)},
        {"data.genres", join(data_genres)},
        {"data.interactions", join(data_interactions)},
        {"model.n_blocks", std::to_string(model_n_blocks)},
        {"model.latent_dim", std::to_string(model_latent_dim)},
        {"model.n_heads", std::to_string(model_n_heads)},
        {"model.ffn_dim", std::to_string(model_ffn_dim)},
        {"model.dropout", fmt(model_dropout)},
        {"model.conv_kernels", join(model_conv_kernels)},
        {"model.look_ahead", std::to_string(model_look_ahead)},
        {"model.mode", model_mode},
        {"model.text_embed_dim", std::to_string(model_text_embed_dim)},
        {"retrieval.k", std::to_string(retrieval_k)},
        {"retrieval.lambda_len", fmt(retrieval_lambda_len)},
        {"loss.lambda_triplet", fmt(loss_lambda_triplet)},
        {"loss.margin", fmt(loss_margin)},
        {"loss.lambda_vel", fmt(loss_lambda_vel)},
        {"loss.lambda_foot", fmt(loss_lambda_foot)},
        {"loss.lambda_bl", fmt(loss_lambda_bl)},
        {"loss.lambda_dm", fmt(loss_lambda_dm)},
        {"loss.lambda_ro", fmt(loss_lambda_ro)},
        {"loss.lambda_sync", fmt(loss_lambda_sync)},
        {"loss.lambda_geo", fmt(loss_lambda_geo)},
        {"loss.lambda_inter", fmt(loss_lambda_inter)},
        {"loss.tau", fmt(loss_tau)},
        {"loss.end_effector_weight", fmt(loss_end_effector_weight)},
        {"loss.contact_radius", fmt(loss_contact_radius)},
        {"train.lr", fmt(train_lr)},
        {"train.weight_decay", fmt(train_weight_decay)},
        {"train.warmup_steps", std::to_string(train_warmup_steps)},
        {"train.batch_size", std::to_string(train_batch_size)},
        {"train.steps", std::to_string(train_steps)},
        {"train.epochs", std::to_string(train_epochs)},
        {"train.seed", std::to_string(train_seed)},
        {"train.p_both", fmt(train_p_both)},
        {"train.p_text", fmt(train_p_text)},
        {"train.p_music", fmt(train_p_music)},
        {"sample.steps", std::to_string(sample_steps)},
        {"sample.schedule", sample_schedule},
        {"sample.guidance_scale", fmt(sample_guidance_scale)},
        {"sample.seed", std::to_string(sample_seed)},
        {"sample.n_frames", std::to_string(sample_n_frames)},
        {"eval.sigma", fmt(eval_sigma)},
        {"eval.feature_dim", std::to_string(eval_feature_dim)},
        {"eval.metric_seed", std::to_string(eval_metric_seed)},
        {"eval.train_steps", std::to_string(eval_train_steps)},
        {"eval.n_pairs", std::to_string(eval_n_pairs)},
        {"eval.smoothing_window", std::to_string(eval_smoothing_window)},
        {"eval.samples_per_condition", std::to_string(eval_samples_per_condition)},
        {"run.out", run_out},
        {"run.dataset", run_dataset},
        {"run.index", run_index},
        {"run.checkpoint", run_checkpoint},
        {"run.evaluator", run_evaluator},
        {"run.text", run_text},
        {"run.music", run_music},
        {"run.actor", run_actor},
    };
    std::sort(kv.begin(), kv.end());
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

namespace {

RunConfig build_config(const std::vector<std::pair<std::string, std::string>>& file_kv,
                       const std::vector<std::string>& overrides) {
    RunConfig c;
    // the profile overlay applies first regardless of its position in the file
    for (const auto& [k, v] : file_kv)
        if (k == "profile") {
            config_set(c, k, v);
            if (v == "desk") apply_desk_profile(c);
        }
    for (const auto& [k, v] : file_kv)
        if (k != "profile") config_set(c, k, v);
    for (const auto& ov : overrides) {
        const size_t eq = ov.find('=');
        require(eq != std::string::npos, "config: override '" + ov + "' must be key=value");
        const std::string k = trim(ov.substr(0, eq));
        const std::string v = trim(ov.substr(eq + 1));
        if (k == "profile" && v == "desk") apply_desk_profile(c);
        config_set(c, k, v);
    }
    c.validate();
    return c;
}

std::vector<std::pair<std::string, std::string>> parse_lines(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        require(eq != std::string::npos,
                "config: line " + std::to_string(line_no) + " is not 'key = value'");
        kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return kv;
}

}  // namespace

RunConfig config_load(const std::string& path, const std::vector<std::string>& overrides) {
    std::vector<std::pair<std::string, std::string>> kv;
    if (!path.empty()) {
        std::ifstream in(path);
        require(in.is_open(), "config: cannot open '" + path + "'");
        kv = parse_lines(in);
    }
    return build_config(kv, overrides);
}

RunConfig config_parse(const std::string& text, const std::vector<std::string>& overrides) {
    std::istringstream in(text);
    auto kv = parse_lines(in);
    return build_config(kv, overrides);
}

const char* build_id() {
#ifdef DUALFLOW_BUILD_ID
    return DUALFLOW_BUILD_ID;
#else
    return "unknown";
#endif
}

}  // namespace dualflow
