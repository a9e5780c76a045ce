// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dualflow/model.hpp"

namespace dualflow {

enum class StepSchedule { Uniform, Cosine };

StepSchedule schedule_from_name(const std::string& name);
const char* schedule_name(StepSchedule s);

struct SamplerConfig {
    int steps = 200;
    StepSchedule schedule = StepSchedule::Cosine;
    double guidance_scale = 1.0;
    TaskMode mode = TaskMode::Interactive;
    uint64_t seed = 0;

    void validate() const;
};

// Strictly decreasing integration grid from t = 1 to t = 0 inclusive
// (steps + 1 points). Cosine spacing: t_k = (1 + cos(pi k / steps)) / 2.
std::vector<double> step_times(int steps, StepSchedule schedule);

// Classifier-free guidance combine: v_uncond + s * (v_cond - v_uncond).
// s = 1 returns v_cond bit-exactly, s = 0 returns v_uncond bit-exactly.
Tensor guidance_combine(const Tensor& v_cond, const Tensor& v_uncond, double s);

// Velocity callback for the generic integrator: fills v_a, v_b at (x, t).
using VelocityField =
    std::function<void(const Tensor& x_a, const Tensor& x_b, double t, Tensor& v_a, Tensor& v_b)>;

// Explicit Euler down the given time grid: x <- x - dt * v. With hold_actor
// the x_a channel is never touched (reactive generation). Aborts with the
// step index if the state stops being finite.
void euler_integrate(const VelocityField& field, Tensor& x_a, Tensor& x_b,
                     const std::vector<double>& times, bool hold_actor);

// Conditioning inputs for one sampling run.
struct SampleCondition {
    std::string text;
    const Tensor* music = nullptr;  // [T x d_m], optional
    std::vector<Exemplar> exemplars;
};

// Transports seeded noise to motion with the trained velocity field. The
// conditioning latents are rebuilt every step (the text latent carries the
// timestep); guidance_scale != 1 adds an unconditional pass per step.
// Reactive mode requires actor_motion and preserves it bit-exactly.
DuetSequence euler_sample(const DualFlowModel& model, const ConditioningEncoders& encoders,
                          const SampleCondition& condition, int n_frames, double fps,
                          const SamplerConfig& config, const Tensor* actor_motion = nullptr);

}  // namespace dualflow
