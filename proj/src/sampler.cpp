// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/sampler.hpp"

#include <cmath>

#include "dualflow/errors.hpp"

namespace dualflow {

StepSchedule schedule_from_name(const std::string& name) {
    if (name == "uniform") return StepSchedule::Uniform;
    if (name == "cosine") return StepSchedule::Cosine;
    throw ValidationError("unknown schedule '" + name + "' (expected uniform or cosine)");
}

const char* schedule_name(StepSchedule s) {
    return s == StepSchedule::Uniform ? "uniform" : "cosine";
}

void SamplerConfig::validate() const {
    require(steps >= 1, "sampler: steps must be >= 1");
    require(guidance_scale >= 0, "sampler: guidance scale must be >= 0");
}

std::vector<double> step_times(int steps, StepSchedule schedule) {
    require(steps >= 1, "step_times: steps must be >= 1");
    std::vector<double> times(static_cast<size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        switch (schedule) {
            case StepSchedule::Uniform:
                times[static_cast<size_t>(k)] = 1.0 - static_cast<double>(k) / steps;
                break;
            case StepSchedule::Cosine:
                times[static_cast<size_t>(k)] =
                    0.5 * (1.0 + std::cos(M_PI * static_cast<double>(k) / steps));
                break;
        }
    }
    times.front() = 1.0;
    times.back() = 0.0;
    return times;
}

Tensor guidance_combine(const Tensor& v_cond, const Tensor& v_uncond, double s) {
    require(v_cond.same_shape(v_uncond), "guidance_combine: shape mismatch");
    if (s == 1.0) return v_cond;
    if (s == 0.0) return v_uncond;
    Tensor out = v_uncond;
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] += s * (v_cond.data[i] - v_uncond.data[i]);
    return out;
}

void euler_integrate(const VelocityField& field, Tensor& x_a, Tensor& x_b,
                     const std::vector<double>& times, bool hold_actor) {
    require(times.size() >= 2, "euler_integrate: need at least two time points");
    Tensor v_a(x_a.rows, x_a.cols), v_b(x_b.rows, x_b.cols);
    for (size_t k = 0; k + 1 < times.size(); ++k) {
        const double t = times[k];
        const double dt = times[k] - times[k + 1];
        field(x_a, x_b, t, v_a, v_b);
        if (!hold_actor)
            for (size_t i = 0; i < x_a.size(); ++i) x_a.data[i] -= dt * v_a.data[i];
        for (size_t i = 0; i < x_b.size(); ++i) x_b.data[i] -= dt * v_b.data[i];
        if (!x_a.all_finite() || !x_b.all_finite())
            throw std::runtime_error("euler_integrate: non-finite state after step " +
                                     std::to_string(k));
    }
}

DuetSequence euler_sample(const DualFlowModel& model, const ConditioningEncoders& encoders,
                          const SampleCondition& condition, int n_frames, double fps,
                          const SamplerConfig& config, const Tensor* actor_motion) {
    config.validate();
    require(n_frames >= 1, "euler_sample: need at least one frame");
    const int fd = model.config().frame_dim();
    const bool reactive = config.mode == TaskMode::Reactive;
    if (reactive) {
        require(actor_motion != nullptr, "euler_sample: reactive mode requires an actor motion");
        require(actor_motion->rows == n_frames && actor_motion->cols == fd,
                "euler_sample: actor motion must be " + std::to_string(n_frames) + " x " +
                    std::to_string(fd));
    }

    Rng noise_rng(Rng::mix(config.seed, 0xe0c1));
    Tensor x_a = reactive ? *actor_motion : Tensor::randn(n_frames, fd, noise_rng);
    Tensor x_b = Tensor::randn(n_frames, fd, noise_rng);

    const std::vector<double> times = step_times(config.steps, config.schedule);
    const double s = config.guidance_scale;

    auto eval_model = [&](const Tensor& xa, const Tensor& xb, double t, bool unconditional,
                          Tensor& va, Tensor& vb) {
        Tape tape;
        tape.set_grad_enabled(false);
        DropFlags flags;
        flags.both_branch = unconditional;
        flags.drop_text = unconditional;
        flags.drop_music = unconditional;
        const ConditioningBundle bundle =
            encoders.build_bundle(tape, condition.text, t, condition.music, n_frames,
                                  condition.exemplars, flags);
        const auto out = model.forward(tape, xa, xb, t, bundle, config.mode, nullptr);
        va = out.v_a.val();
        vb = out.v_b.val();
    };

    const VelocityField field = [&](const Tensor& xa, const Tensor& xb, double t, Tensor& va,
                                    Tensor& vb) {
        if (s == 1.0) {
            eval_model(xa, xb, t, false, va, vb);
            return;
        }
        if (s == 0.0) {
            eval_model(xa, xb, t, true, va, vb);
            return;
        }
        Tensor va_c, vb_c, va_u, vb_u;
        eval_model(xa, xb, t, false, va_c, vb_c);
        eval_model(xa, xb, t, true, va_u, vb_u);
        va = guidance_combine(va_c, va_u, s);
        vb = guidance_combine(vb_c, vb_u, s);
    };

    euler_integrate(field, x_a, x_b, times, reactive);

    DuetSequence out;
    out.fps = fps;
    out.frames_a = std::move(x_a);
    out.frames_b = std::move(x_b);
    return out;
}

}  // namespace dualflow
