// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
//
// dualflow CLI: make-dataset, build-index, train, sample, eval, retrieve.
// Each command reads a config file plus --set overrides, writes the resolved
// config echo and a run-info record next to its outputs, and exits 0 on
// success, 2 on a validation error, 1 on a runtime failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "dualflow/checkpoint.hpp"
#include "dualflow/config.hpp"
#include "dualflow/container.hpp"
#include "dualflow/kernels.hpp"
#include "dualflow/metrics.hpp"
#include "dualflow/sampler.hpp"
#include "dualflow/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dualflow;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::string dataset;
    std::string index;
    std::string checkpoint;
    std::string evaluator;
    std::string text;
    std::string music;
    std::string actor;
    std::string mode;
    int length = 0;
    int k = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--set", args.sets, "override, key=value (repeatable)");
    cmd->add_option("--out", args.out, "output directory");
}

RunConfig resolve_config(const CommonArgs& args) {
    std::vector<std::string> overrides = args.sets;
    auto push = [&](const char* key, const std::string& value) {
        if (!value.empty()) overrides.push_back(std::string(key) + "=" + value);
    };
    push("run.out", args.out);
    push("run.dataset", args.dataset);
    push("run.index", args.index);
    push("run.checkpoint", args.checkpoint);
    push("run.evaluator", args.evaluator);
    push("run.text", args.text);
    push("run.music", args.music);
    push("run.actor", args.actor);
    if (!args.mode.empty()) overrides.push_back("model.mode=" + args.mode);
    if (args.length > 0) overrides.push_back("sample.n_frames=" + std::to_string(args.length));
    if (args.k > 0) overrides.push_back("retrieval.k=" + std::to_string(args.k));
    return config_load(args.config_path, overrides);
}

std::string run_dir_for(const RunConfig& config, const std::string& command) {
    if (!config.run_out.empty()) return config.run_out;
    const char* root = std::getenv("DUALFLOW_RUN_DIR");
    return (root != nullptr ? std::string(root) : std::string("runs")) + "/" + command;
}

void write_run_records(const std::string& dir, const std::string& command,
                       const RunConfig& config) {
    fs::create_directories(dir);
    std::ofstream echo(dir + "/config_echo.cfg");
    require(echo.is_open(), "cannot write config echo in '" + dir + "'");
    echo << config.echo();
    require(echo.good(), "config echo write failed");

    json info;
    info["command"] = command;
    info["build_id"] = build_id();
    info["seeds"] = {{"data", config.data_seed},
                     {"train", config.train_seed},
                     {"sample", config.sample_seed},
                     {"metric", config.eval_metric_seed}};
    std::ofstream run_info(dir + "/run_info.json");
    require(run_info.is_open(), "cannot write run info in '" + dir + "'");
    run_info << info.dump(2) << "\n";
}

// Config echo as a map; io wiring keys are dropped so checkpoints written by
// reruns into different directories stay byte-identical.
std::map<std::string, std::string> echo_as_map(const RunConfig& config) {
    std::map<std::string, std::string> out;
    std::istringstream in(config.echo());
    std::string line;
    while (std::getline(in, line)) {
        const size_t eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        if (key.rfind("run.", 0) == 0) continue;
        out[key] = line.substr(eq + 3);
    }
    return out;
}

// Rebuilds the architecture recorded in a checkpoint manifest; sampling and
// io keys keep their current values.
RunConfig arch_from_checkpoint(const CheckpointInfo& info, const RunConfig& current) {
    RunConfig arch = current;
    for (const char* key :
         {"model.n_blocks", "model.latent_dim", "model.n_heads", "model.ffn_dim",
          "model.dropout", "model.conv_kernels", "model.look_ahead", "model.text_embed_dim",
          "data.music_dim"}) {
        auto it = info.config_echo.find(key);
        if (it != info.config_echo.end()) config_set(arch, key, it->second);
    }
    return arch;
}

struct LoadedModel {
    ParamStore store;
    std::unique_ptr<ConditioningEncoders> encoders;
    std::unique_ptr<DualFlowModel> model;
    CheckpointInfo info;
    RunConfig arch;
};

std::unique_ptr<LoadedModel> load_model(const std::string& prefix, const RunConfig& current) {
    auto lm = std::make_unique<LoadedModel>();
    lm->info = read_checkpoint_info(prefix);
    lm->arch = arch_from_checkpoint(lm->info, current);
    Rng init(0);
    lm->encoders =
        std::make_unique<ConditioningEncoders>(lm->arch.encoder_config(), lm->store, init);
    lm->model = std::make_unique<DualFlowModel>(lm->arch.model_config(), lm->store, init);
    load_checkpoint(prefix, lm->store);
    return lm;
}

Tensor duet_rows_of(const DuetSequence& motion) {
    const int fd = motion.frames_a.cols;
    Tensor rows(motion.n_frames(), 2 * fd);
    for (int t = 0; t < motion.n_frames(); ++t)
        for (int j = 0; j < fd; ++j) {
            rows.at(t, j) = motion.frames_a.at(t, j);
            rows.at(t, fd + j) = motion.frames_b.at(t, j);
        }
    return rows;
}

// --------------------------------------------------------------------------
// commands
// --------------------------------------------------------------------------

int cmd_make_dataset(const RunConfig& config) {
    const std::string dir = run_dir_for(config, "make-dataset");
    write_run_records(dir, "make-dataset", config);
    const Dataset ds = generate_dataset(config.data_n_clips, config.generator_config(), dir);
    json done = {{"event", "dataset_written"},
                 {"clips", ds.records.size()},
                 {"manifest", dir + "/manifest.jsonl"}};
    std::cout << done.dump() << std::endl;
    return 0;
}

int cmd_build_index(const RunConfig& config) {
    require(!config.run_dataset.empty(), "build-index: missing --dataset (the manifest path)");
    const std::string dir = run_dir_for(config, "build-index");
    write_run_records(dir, "build-index", config);
    const Dataset ds = load_dataset(config.run_dataset);
    const RetrievalDatabase db =
        build_database(ds, TextFeaturizer(), MusicFeaturizer(), config.retrieval_lambda_len);
    save_database(db, dir);
    json done = {{"event", "index_written"},
                 {"entries_per_channel", db.channel(Channel::S).size()},
                 {"dir", dir}};
    std::cout << done.dump() << std::endl;
    return 0;
}

int cmd_train(const RunConfig& config) {
    require(!config.run_dataset.empty(), "train: missing --dataset (the manifest path)");
    require(!config.run_index.empty(), "train: missing --index (the retrieval database dir)");
    const std::string dir = run_dir_for(config, "train");
    write_run_records(dir, "train", config);

    const Dataset ds = load_dataset(config.run_dataset);
    const RetrievalDatabase db = load_database(config.run_index);

    ParamStore store;
    Rng init(Rng::mix(config.train_seed, 0x1017));
    ConditioningEncoders encoders(config.encoder_config(), store, init);
    DualFlowModel model(config.model_config(), store, init);
    Trainer trainer(model, encoders, store, ds, db, config.loss_weights(),
                    config.train_config(static_cast<int>(ds.size())),
                    task_mode_from_name(config.model_mode));

    std::ofstream log(dir + "/train_log.jsonl");
    require(log.is_open(), "train: cannot write log in '" + dir + "'");
    const int steps = config.resolved_train_steps(static_cast<int>(ds.size()));
    trainer.run(&log, &std::cout, std::max(1, steps / 20));

    const CheckpointInfo info = save_checkpoint(dir + "/model", store, echo_as_map(config));
    json done = {{"event", "checkpoint_written"},
                 {"prefix", dir + "/model"},
                 {"checkpoint_id", info.checkpoint_id}};
    std::cout << done.dump() << std::endl;
    return 0;
}

int cmd_sample(const RunConfig& config) {
    require(!config.run_checkpoint.empty(), "sample: missing --checkpoint (manifest prefix)");
    const TaskMode mode = task_mode_from_name(config.model_mode);
    require(mode != TaskMode::Reactive || !config.run_actor.empty(),
            "sample: reactive mode requires --actor (a motion container for the fixed actor)");
    const std::string dir = run_dir_for(config, "sample");
    write_run_records(dir, "sample", config);

    auto lm = load_model(config.run_checkpoint, config);

    Tensor music;
    bool has_music = false;
    if (!config.run_music.empty()) {
        music = read_feature_container(config.run_music);
        has_music = true;
    }
    const int n_frames = config.resolved_sample_frames();
    if (has_music) {
        require(music.rows == n_frames,
                "sample: music has " + std::to_string(music.rows) + " frames, expected " +
                    std::to_string(n_frames));
    }

    SampleCondition condition;
    condition.text = config.run_text;
    condition.music = has_music ? &music : nullptr;

    if (!config.run_index.empty()) {
        require(!config.run_dataset.empty(),
                "sample: --index also needs --dataset to load exemplar motions");
        const RetrievalDatabase db = load_database(config.run_index);
        const Dataset ds = load_dataset(config.run_dataset);
        MotionCache cache;
        const RetrievedSets sets = retrieve_for_query(
            db, decompose_text(config.run_text), has_music ? &music : nullptr, n_frames,
            config.retrieval_k, config.retrieval_lambda_len, TextFeaturizer(),
            MusicFeaturizer());
        condition.exemplars = gather_exemplars(sets, ds, cache);
    }

    Tensor actor;
    const Tensor* actor_ptr = nullptr;
    if (mode == TaskMode::Reactive) {
        const DuetSequence actor_duet = read_motion_container(config.run_actor);
        actor = actor_duet.frames_a;
        require(actor.rows == n_frames, "sample: actor motion has " +
                                            std::to_string(actor.rows) + " frames, expected " +
                                            std::to_string(n_frames));
        actor_ptr = &actor;
    }

    SamplerConfig sc = config.sampler_config();
    sc.mode = mode;
    const DuetSequence motion = euler_sample(*lm->model, *lm->encoders, condition, n_frames,
                                             config.data_fps, sc, actor_ptr);
    write_motion_container(dir + "/sample.dfmo", motion, 22);

    json sidecar = {{"seed", sc.seed},
                    {"steps", sc.steps},
                    {"schedule", schedule_name(sc.schedule)},
                    {"guidance_scale", sc.guidance_scale},
                    {"mode", task_mode_name(sc.mode)},
                    {"checkpoint_id", lm->info.checkpoint_id},
                    {"condition",
                     {{"text", condition.text},
                      {"music", config.run_music},
                      {"actor", config.run_actor},
                      {"exemplars", condition.exemplars.size()}}}};
    std::ofstream side(dir + "/sample.json");
    side << sidecar.dump(2) << "\n";
    std::cout << json{{"event", "sample_written"}, {"path", dir + "/sample.dfmo"}}.dump()
              << std::endl;
    return 0;
}

int cmd_eval(const RunConfig& config) {
    require(!config.run_dataset.empty(), "eval: missing --dataset (the manifest path)");
    require(!config.run_checkpoint.empty(), "eval: missing --checkpoint (manifest prefix)");
    const std::string dir = run_dir_for(config, "eval");
    write_run_records(dir, "eval", config);

    const Dataset ds = load_dataset(config.run_dataset);
    require(static_cast<int>(ds.size()) * config.eval_samples_per_condition >= 32,
            "eval: retrieval precision needs clips x samples_per_condition >= 32, got " +
                std::to_string(ds.size() * config.eval_samples_per_condition));
    auto lm = load_model(config.run_checkpoint, config);
    const TaskMode mode = task_mode_from_name(config.model_mode);

    // evaluator: load if given, otherwise train on a held-out synthetic split
    FeatureExtractor extractor(config.evaluator_config());
    if (!config.run_evaluator.empty()) {
        extractor.load(config.run_evaluator);
    } else {
        GeneratorConfig held_out = config.generator_config();
        held_out.seed = Rng::mix(config.data_seed, 0xE7A1);
        std::vector<DuetClip> split;
        const int n = std::max(12, config.data_n_clips);
        split.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            split.push_back(generate_clip(static_cast<uint64_t>(i), held_out));
        extractor.train(split);
        extractor.save(dir + "/evaluator");
        std::cout << json{{"event", "evaluator_trained"},
                          {"checkpoint_id", extractor.checkpoint_id()}}
                         .dump()
                  << std::endl;
    }

    std::unique_ptr<RetrievalDatabase> db;
    MotionCache cache;
    if (!config.run_index.empty())
        db = std::make_unique<RetrievalDatabase>(load_database(config.run_index));

    // generate samples per condition and collect features
    std::vector<std::vector<double>> real_feats, gen_feats, text_feats;
    std::vector<std::vector<int>> groups;
    double bas_acc = 0, bed_acc = 0;
    int n_samples = 0;
    for (size_t ci = 0; ci < ds.size(); ++ci) {
        const DuetClip clip = load_clip(ds, ci);
        real_feats.push_back(extractor.motion_features(clip.motion));

        SampleCondition condition;
        condition.text = clip.text;
        condition.music = &clip.music_features;
        if (db) {
            const RetrievedSets sets = retrieve_for_query(
                *db, clip.decomposition, &clip.music_features, clip.motion.n_frames(),
                config.retrieval_k, config.retrieval_lambda_len, TextFeaturizer(),
                MusicFeaturizer());
            condition.exemplars = gather_exemplars(sets, ds, cache);
        }

        std::vector<int> group;
        for (int rep = 0; rep < config.eval_samples_per_condition; ++rep) {
            SamplerConfig sc = config.sampler_config();
            sc.mode = mode;
            sc.seed = Rng::mix(config.eval_metric_seed,
                               static_cast<uint64_t>(ci) * 1000 + static_cast<uint64_t>(rep));
            const Tensor* actor = mode == TaskMode::Reactive ? &clip.motion.frames_a : nullptr;
            const DuetSequence sample =
                euler_sample(*lm->model, *lm->encoders, condition, clip.motion.n_frames(),
                             clip.motion.fps, sc, actor);
            group.push_back(static_cast<int>(gen_feats.size()));
            gen_feats.push_back(extractor.motion_features(sample));
            text_feats.push_back(extractor.text_features(clip.text));
            bas_acc += beat_align_score(duet_rows_of(sample), sample.fps, clip.beat_times,
                                        config.eval_sigma, config.eval_smoothing_window);
            bed_acc += beat_echo_degree(sample.frames_a, sample.frames_b, sample.fps,
                                        config.eval_sigma, config.eval_smoothing_window);
            ++n_samples;
        }
        groups.push_back(group);
        std::cout << json{{"event", "eval_progress"}, {"clip", ci + 1}, {"of", ds.size()}}.dump()
                  << std::endl;
    }

    MetricReport report;
    report.fid = fid(real_feats, gen_feats);
    const RPrecisionResult rp =
        r_precision_and_mmdist(text_feats, gen_feats, 32, config.eval_metric_seed);
    report.r_top1 = rp.top1;
    report.r_top2 = rp.top2;
    report.r_top3 = rp.top3;
    report.mm_dist = rp.mm_dist;
    const DiversityResult dv =
        diversity_and_mmodality(gen_feats, groups, config.eval_n_pairs, config.eval_metric_seed);
    report.diversity = dv.diversity;
    report.mmodality = dv.mmodality;
    report.bas = bas_acc / std::max(1, n_samples);
    report.bed = bed_acc / std::max(1, n_samples);
    report.evaluator_checkpoint = extractor.checkpoint_id();
    report.dataset_manifest_hash = file_hash_hex(config.run_dataset);
    report.metric_seed = config.eval_metric_seed;

    std::ofstream out(dir + "/metrics.json");
    out << report.to_json() << "\n";
    std::cout << report.to_json() << std::endl;
    return 0;
}

int cmd_retrieve(const RunConfig& config) {
    require(!config.run_index.empty(), "retrieve: missing --index (the retrieval database dir)");
    const std::string dir = run_dir_for(config, "retrieve");
    write_run_records(dir, "retrieve", config);

    const RetrievalDatabase db = load_database(config.run_index);
    Tensor music;
    bool has_music = false;
    if (!config.run_music.empty()) {
        music = read_feature_container(config.run_music);
        has_music = true;
    }
    const int length = config.resolved_sample_frames();
    const RetrievedSets sets = retrieve_for_query(
        db, decompose_text(config.run_text), has_music ? &music : nullptr, length,
        config.retrieval_k, config.retrieval_lambda_len, TextFeaturizer(), MusicFeaturizer());

    json out;
    out["query"] = {{"text", config.run_text}, {"length", length}};
    const Decomposition d = decompose_text(config.run_text);
    out["decomposition"] = {{"spatial", d.spatial}, {"body", d.body}, {"rhythm", d.rhythm}};
    for (Channel c : kAllChannels) {
        json entries = json::array();
        for (const ScoredEntry& e : sets.at(c))
            entries.push_back({{"clip_id", e.clip_id}, {"score", e.score}, {"length", e.length}});
        out["results"][channel_name(c)] = entries;
    }
    std::ofstream file(dir + "/results.json");
    file << out.dump(2) << "\n";
    std::cout << out.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dualflow: retrieval-augmented rectified-flow duet motion generation"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* make_dataset =
        app.add_subcommand("make-dataset", "generate a synthetic duet dataset");
    add_common(make_dataset, args);

    CLI::App* build_index = app.add_subcommand("build-index", "build the retrieval database");
    add_common(build_index, args);
    build_index->add_option("--dataset", args.dataset, "dataset manifest (.jsonl)");

    CLI::App* train = app.add_subcommand("train", "train the velocity-field model");
    add_common(train, args);
    train->add_option("--dataset", args.dataset, "dataset manifest (.jsonl)");
    train->add_option("--index", args.index, "retrieval database directory");

    CLI::App* sample = app.add_subcommand("sample", "generate motion from a checkpoint");
    add_common(sample, args);
    sample->add_option("--checkpoint", args.checkpoint, "checkpoint prefix (without .json)");
    sample->add_option("--index", args.index, "retrieval database directory");
    sample->add_option("--dataset", args.dataset, "dataset manifest for exemplar motions");
    sample->add_option("--text", args.text, "text prompt");
    sample->add_option("--music", args.music, "music feature container");
    sample->add_option("--actor", args.actor, "actor motion container (reactive mode)");
    sample->add_option("--mode", args.mode, "interactive or reactive");
    sample->add_option("--length", args.length, "frames to generate");

    CLI::App* eval = app.add_subcommand("eval", "run the metric suite against a checkpoint");
    add_common(eval, args);
    eval->add_option("--dataset", args.dataset, "dataset manifest (.jsonl)");
    eval->add_option("--checkpoint", args.checkpoint, "checkpoint prefix");
    eval->add_option("--index", args.index, "retrieval database directory");
    eval->add_option("--evaluator", args.evaluator, "frozen evaluator checkpoint prefix");
    eval->add_option("--mode", args.mode, "interactive or reactive");

    CLI::App* retrieve = app.add_subcommand("retrieve", "query the retrieval database");
    add_common(retrieve, args);
    retrieve->add_option("--index", args.index, "retrieval database directory");
    retrieve->add_option("--text", args.text, "query text");
    retrieve->add_option("--music", args.music, "music feature container");
    retrieve->add_option("--length", args.length, "query length in frames");
    retrieve->add_option("--k", args.k, "matches per channel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        const RunConfig config = resolve_config(args);
        kernels::set_threads(config.runtime_threads);
        if (make_dataset->parsed()) return cmd_make_dataset(config);
        if (build_index->parsed()) return cmd_build_index(config);
        if (train->parsed()) return cmd_train(config);
        if (sample->parsed()) return cmd_sample(config);
        if (eval->parsed()) return cmd_eval(config);
        if (retrieve->parsed()) return cmd_retrieve(config);
        std::cerr << "unknown subcommand\n" << app.help() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
