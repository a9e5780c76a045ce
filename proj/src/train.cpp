// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/train.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "dualflow/kernels.hpp"

namespace dualflow {

void TrainConfig::validate() const {
    require(lr > 0, "train: lr must be positive");
    require(weight_decay >= 0, "train: weight_decay must be non-negative");
    require(warmup_steps >= 0, "train: warmup_steps must be non-negative");
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(steps >= 1, "train: steps must be >= 1");
    require(retrieval_k >= 1, "train: retrieval k must be >= 1");
    for (double p : {p_both, p_text, p_music})
        require(p >= 0 && p <= 1, "train: CFG probabilities must lie in [0, 1]");
}

std::map<std::string, double> LossBreakdown::as_map() const {
    return {{"flow", flow}, {"triplet", triplet}, {"foot", foot}, {"vel", vel},
            {"BL", bl},     {"DM", dm},           {"RO", ro},     {"sync", sync}};
}

double AdamOptimizer::learning_rate(int step) const {
    if (config_.warmup_steps <= 0) return config_.lr;
    const double warm = std::min(1.0, (step + 1.0) / config_.warmup_steps);
    return config_.lr * warm;
}

void AdamOptimizer::step(int step_index) {
    const double lr = learning_rate(step_index);
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double bias1 = 1.0 - std::pow(b1, step_index + 1.0);
    const double bias2 = 1.0 - std::pow(b2, step_index + 1.0);
    for (const auto& p : store_.all()) {
        double* w = p->value.data.data();
        double* g = p->grad.data.data();
        double* m = p->adam_m.data.data();
        double* v = p->adam_v.data.data();
        const size_t n = p->value.size();
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + config_.adam_eps) +
                          config_.weight_decay * w[i]);
        }
    }
}

Trainer::Trainer(DualFlowModel& model, ConditioningEncoders& encoders, ParamStore& store,
                 const Dataset& dataset, const RetrievalDatabase& db, const LossWeights& weights,
                 const TrainConfig& config, TaskMode mode)
    : model_(model),
      encoders_(encoders),
      store_(store),
      dataset_(dataset),
      weights_(weights),
      config_(config),
      mode_(mode),
      optimizer_(store, config) {
    config_.validate();
    weights_.validate();
    require(!dataset.records.empty(), "trainer: dataset is empty");

    TextFeaturizer text_enc;
    MusicFeaturizer music_enc;
    clips_.reserve(dataset.size());
    exemplars_.reserve(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        clips_.push_back(load_clip(dataset, i));
        const DuetClip& clip = clips_.back();
        const RetrievedSets sets = retrieve_for_query(
            db, clip.decomposition, &clip.music_features, clip.motion.n_frames(),
            config_.retrieval_k, config_.lambda_len, text_enc, music_enc,
            /*exclude_clip_id=*/clip.clip_id);
        exemplars_.push_back(gather_exemplars(sets, dataset, cache_));
    }
}

std::vector<size_t> Trainer::batch_indices(int step_index) const {
    const size_t n = clips_.size();
    const size_t batch = std::min<size_t>(static_cast<size_t>(config_.batch_size), n);
    std::vector<size_t> idx(batch);
    for (size_t i = 0; i < batch; ++i)
        idx[i] = (static_cast<size_t>(step_index) * batch + i) % n;
    return idx;
}

LossBreakdown Trainer::train_step(int step_index) {
    const std::vector<size_t> batch = batch_indices(step_index);
    const size_t batch_n = batch.size();
    const Skeleton skeleton = default_skeleton();
    const Rng step_rng = Rng(config_.seed).fork(0x5745 + static_cast<uint64_t>(step_index));

    Tape tape;
    store_.zero_grads();
    ConditioningEncoders::ProjectionCache projected;  // shared across the batch

    struct ClipPred {
        Var v_pred;      // flattened prediction used by the triplet term
        size_t clip_index = 0;
    };
    std::vector<ClipPred> preds(batch_n);
    std::vector<Var> flow_terms, geo_terms_foot, geo_terms_vel, geo_terms_bl;
    std::vector<Var> inter_dm, inter_ro, inter_sync;

    for (size_t bi = 0; bi < batch_n; ++bi) {
        const DuetClip& clip = clips_[batch[bi]];
        Rng clip_rng = step_rng.fork(batch[bi]);
        Rng noise_rng = clip_rng.fork(1);
        Rng cfg_rng = clip_rng.fork(2);
        Rng drop_rng = clip_rng.fork(3);

        const int T = clip.motion.n_frames();
        const double t_sample = clip_rng.uniform();

        // clean duet [T x 524]
        Tensor x0(T, 524);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < 262; ++j) {
                x0.at(t, j) = clip.motion.frames_a.at(t, j);
                x0.at(t, 262 + j) = clip.motion.frames_b.at(t, j);
            }

        const DropFlags flags =
            cfg_mask(cfg_rng, config_.p_both, config_.p_text, config_.p_music);
        const ConditioningBundle bundle =
            encoders_.build_bundle(tape, clip.text, t_sample, &clip.music_features, T,
                                   exemplars_[batch[bi]], flags, &projected);

        Var x0_hat;   // [T x 524] position-space recovery for the regularizers
        Var v_flat;   // prediction for the triplet term
        Var flow;
        if (mode_ == TaskMode::Interactive) {
            Tensor eps = Tensor::randn(T, 524, noise_rng);
            const FlowSample fs = interpolate(x0, eps, t_sample);
            Tensor x_a_t(T, 262), x_b_t(T, 262);
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < 262; ++j) {
                    x_a_t.at(t, j) = fs.x_t.at(t, j);
                    x_b_t.at(t, j) = fs.x_t.at(t, 262 + j);
                }
            auto out = model_.forward(tape, x_a_t, x_b_t, t_sample, bundle, mode_,
                                      model_.config().dropout > 0 ? &drop_rng : nullptr);
            Var v_pred = concat_cols({out.v_a, out.v_b});
            flow = flow_loss(v_pred, fs.v_t);
            x0_hat = predicted_clean(fs.x_t, v_pred, t_sample);
            v_flat = v_pred;
        } else {
            // reactive: actor stays clean; only the reactor flows
            Tensor x0_b(T, 262), gt_a(T, 262);
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < 262; ++j) {
                    gt_a.at(t, j) = x0.at(t, j);
                    x0_b.at(t, j) = x0.at(t, 262 + j);
                }
            Tensor eps = Tensor::randn(T, 262, noise_rng);
            const FlowSample fs = interpolate(x0_b, eps, t_sample);
            auto out = model_.forward(tape, gt_a, fs.x_t, t_sample, bundle, mode_,
                                      model_.config().dropout > 0 ? &drop_rng : nullptr);
            flow = flow_loss(out.v_b, fs.v_t);
            Var x0_hat_b = predicted_clean(fs.x_t, out.v_b, t_sample);
            x0_hat = concat_cols({tape.constant(gt_a), x0_hat_b});
            v_flat = concat_cols({out.v_a, out.v_b});
        }

        const GeometricTerms geo = geometric_terms(x0_hat, x0, skeleton);
        const InteractionTerms inter = interaction_terms(x0_hat, x0, skeleton, weights_);

        flow_terms.push_back(flow);
        geo_terms_foot.push_back(geo.foot);
        geo_terms_vel.push_back(geo.vel);
        geo_terms_bl.push_back(geo.bone_length);
        inter_dm.push_back(inter.distance_map);
        inter_ro.push_back(inter.relative_orientation);
        inter_sync.push_back(inter.sync);
        preds[bi] = ClipPred{v_flat, batch[bi]};
    }

    // triplet mining: positives share the anchor's genre, negatives differ;
    // deterministic pick = lowest clip id among candidates
    std::vector<Var> triplet_terms;
    for (size_t ai = 0; ai < batch_n; ++ai) {
        const std::string& genre = clips_[preds[ai].clip_index].genre;
        int pos = -1, neg = -1;
        for (size_t bi = 0; bi < batch_n; ++bi) {
            if (bi == ai) continue;
            const std::string& other = clips_[preds[bi].clip_index].genre;
            if (other == genre) {
                if (pos < 0) pos = static_cast<int>(bi);
            } else if (neg < 0) {
                neg = static_cast<int>(bi);
            }
        }
        if (pos >= 0 && neg >= 0)
            triplet_terms.push_back(triplet_loss(preds[ai].v_pred,
                                                 preds[static_cast<size_t>(pos)].v_pred,
                                                 preds[static_cast<size_t>(neg)].v_pred,
                                                 weights_.margin));
    }

    auto mean_of = [&](std::vector<Var>& terms) -> Var {
        Var acc = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
        return scale(acc, 1.0 / static_cast<double>(terms.size()));
    };

    Var flow_mean = mean_of(flow_terms);
    Var foot_mean = mean_of(geo_terms_foot);
    Var vel_mean = mean_of(geo_terms_vel);
    Var bl_mean = mean_of(geo_terms_bl);
    Var dm_mean = mean_of(inter_dm);
    Var ro_mean = mean_of(inter_ro);
    Var sync_mean = mean_of(inter_sync);
    Var triplet_mean = triplet_terms.empty() ? tape.constant(Tensor::scalar(0.0))
                                             : mean_of(triplet_terms);

    Var crf = crf_loss(flow_mean, triplet_mean, weights_.lambda_triplet);
    Var geo = add(add(scale(foot_mean, weights_.lambda_foot),
                      scale(vel_mean, weights_.lambda_vel)),
                  scale(bl_mean, weights_.lambda_bl));
    Var inter = add(add(scale(dm_mean, weights_.lambda_dm),
                        scale(ro_mean, weights_.lambda_ro)),
                    scale(sync_mean, weights_.lambda_sync));
    Var total = total_loss(crf, geo, inter, weights_.lambda_geo, weights_.lambda_inter);

    LossBreakdown out;
    out.flow = flow_mean.item();
    out.triplet = triplet_mean.item();
    out.foot = foot_mean.item();
    out.vel = vel_mean.item();
    out.bl = bl_mean.item();
    out.dm = dm_mean.item();
    out.ro = ro_mean.item();
    out.sync = sync_mean.item();
    out.total = total.item();
    for (const auto& [key, value] : out.as_map())
        if (!std::isfinite(value))
            throw std::runtime_error("train_step: non-finite '" + key + "' loss at step " +
                                     std::to_string(step_index));
    if (!std::isfinite(out.total))
        throw std::runtime_error("train_step: non-finite total loss at step " +
                                 std::to_string(step_index));

    tape.backward(total);
    optimizer_.step(step_index);
    return out;
}

LossBreakdown Trainer::run(std::ostream* log, std::ostream* progress, int progress_stride) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    LossBreakdown last;
    for (int step = 0; step < config_.steps; ++step) {
        last = train_step(step);
        const double wall = std::chrono::duration<double>(Clock::now() - start).count();
        if (log != nullptr) {
            nlohmann::json line;
            line["step"] = step;
            line["losses"] = last.as_map();
            line["total"] = last.total;
            line["lr"] = optimizer_.learning_rate(step);
            line["wall_time_s"] = wall;
            (*log) << line.dump() << "\n";
        }
        if (progress != nullptr && progress_stride > 0 &&
            (step % progress_stride == 0 || step + 1 == config_.steps)) {
            nlohmann::json line;
            line["event"] = "train_progress";
            line["step"] = step;
            line["of"] = config_.steps;
            line["flow"] = last.flow;
            line["total"] = last.total;
            line["wall_time_s"] = wall;
            (*progress) << line.dump() << std::endl;
        }
    }
    return last;
}

}  // namespace dualflow
