// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dualflow/losses.hpp"
#include "dualflow/model.hpp"
#include "dualflow/retrieval.hpp"

namespace dualflow {

struct TrainConfig {
    double lr = 2e-4;
    double weight_decay = 2e-5;
    int warmup_steps = 1000;
    int batch_size = 32;
    int steps = 2000;
    uint64_t seed = 0;
    int retrieval_k = 2;
    double lambda_len = 1.0;
    double p_both = 0.10;
    double p_text = 0.20;
    double p_music = 0.20;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// Per-step loss components (raw, pre-weighting) keyed exactly as
// {flow, triplet, foot, vel, BL, DM, RO, sync} in the log.
struct LossBreakdown {
    double flow = 0, triplet = 0, foot = 0, vel = 0, bl = 0, dm = 0, ro = 0, sync = 0;
    double total = 0;

    std::map<std::string, double> as_map() const;
};

// Decoupled-weight-decay Adam with linear warmup.
class AdamOptimizer {
public:
    AdamOptimizer(ParamStore& store, const TrainConfig& config) : store_(store), config_(config) {}

    double learning_rate(int step) const;
    void step(int step_index);

private:
    ParamStore& store_;
    TrainConfig config_;
};

// Owns the whole optimization step: batch assembly, flow interpolation,
// leave-one-out retrieval, CFG masking, forward, losses, Adam update.
// Random streams are partitioned per (step, clip-in-batch), so runs with the
// same seed produce identical loss trajectories.
class Trainer {
public:
    Trainer(DualFlowModel& model, ConditioningEncoders& encoders, ParamStore& store,
            const Dataset& dataset, const RetrievalDatabase& db, const LossWeights& weights,
            const TrainConfig& config, TaskMode mode);

    LossBreakdown train_step(int step_index);

    // Runs config.steps steps; emits one JSON line per step to `log` if
    // given, and coarser JSON progress lines to `progress` every
    // `progress_stride` steps.
    LossBreakdown run(std::ostream* log, std::ostream* progress = nullptr,
                      int progress_stride = 0);

    const std::vector<DuetClip>& clips() const { return clips_; }
    const std::vector<Exemplar>& exemplars_for(size_t clip_index) const {
        return exemplars_[clip_index];
    }

private:
    std::vector<size_t> batch_indices(int step_index) const;

    DualFlowModel& model_;
    ConditioningEncoders& encoders_;
    ParamStore& store_;
    const Dataset& dataset_;
    const LossWeights weights_;
    TrainConfig config_;
    TaskMode mode_;
    AdamOptimizer optimizer_;
    std::vector<DuetClip> clips_;
    std::vector<std::vector<Exemplar>> exemplars_;  // leave-one-out, cached
    MotionCache cache_;
};

}  // namespace dualflow
