// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dualflow/errors.hpp"
#include "dualflow/synth.hpp"

using namespace dualflow;

TEST_CASE("beat_grid arithmetic") {
    CHECK(beat_grid(60.0, 4.0) == std::vector<double>{0.0, 1.0, 2.0, 3.0});
    CHECK(beat_grid(120.0, 2.0) == std::vector<double>{0.0, 0.5, 1.0, 1.5});
    CHECK(beat_grid(137.0, 0.0).empty());
    CHECK_THROWS_AS(beat_grid(0.0, 4.0), ValidationError);
    CHECK_THROWS_AS(beat_grid(-10.0, 4.0), ValidationError);
}

TEST_CASE("generate_clip is deterministic in (seed, config)") {
    GeneratorConfig cfg;
    cfg.n_frames = 48;
    const DuetClip a = generate_clip(5, cfg);
    const DuetClip b = generate_clip(5, cfg);
    CHECK(a.text == b.text);
    CHECK(a.genre == b.genre);
    CHECK(a.tempo_bpm == b.tempo_bpm);
    CHECK(a.beat_times == b.beat_times);
    CHECK(max_abs_diff(a.motion.frames_a, b.motion.frames_a) == 0.0);
    CHECK(max_abs_diff(a.motion.frames_b, b.motion.frames_b) == 0.0);
    CHECK(max_abs_diff(a.music_features, b.music_features) == 0.0);

    const DuetClip c = generate_clip(6, cfg);
    CHECK(max_abs_diff(a.motion.frames_a, c.motion.frames_a) > 0.0);
}

TEST_CASE("generated clips respect the shared-frame invariants") {
    GeneratorConfig cfg;
    cfg.n_frames = 64;
    const DuetClip clip = generate_clip(3, cfg);
    CHECK(clip.motion.frames_a.rows == cfg.n_frames);
    CHECK(clip.motion.frames_b.rows == cfg.n_frames);
    CHECK(clip.motion.frames_a.cols == 262);
    // person A's frame-0 root is the origin
    CHECK(clip.motion.frames_a.at(0, 0) == 0.0);
    CHECK(clip.motion.frames_a.at(0, 1) == 0.0);
    CHECK(clip.motion.frames_a.at(0, 2) == 0.0);
    CHECK(clip.music_features.rows == cfg.n_frames);
    CHECK(clip.music_features.cols == cfg.music_dim);
    for (double b : clip.beat_times) CHECK(b < cfg.duration_s());
    CHECK(std::is_sorted(clip.beat_times.begin(), clip.beat_times.end()));
}

TEST_CASE("recomputed bone lengths match the skeleton template") {
    GeneratorConfig cfg;
    cfg.n_frames = 40;
    const Skeleton skel = default_skeleton();
    const MotionLayout layout{22};
    for (uint64_t seed : {0ull, 7ull, 13ull}) {
        const DuetClip clip = generate_clip(seed, cfg);
        for (const Tensor* frames : {&clip.motion.frames_a, &clip.motion.frames_b}) {
            const Tensor lengths = bone_lengths_from_positions(*frames, layout, skel);
            for (int t = 0; t < lengths.rows; ++t)
                for (int j = 1; j < 22; ++j)
                    CHECK(lengths.at(t, j - 1) ==
                          doctest::Approx(skel.bone_lengths[static_cast<size_t>(j)])
                              .epsilon(1e-6));
        }
    }
}

TEST_CASE("every beat has a joint-speed minimum within one frame") {
    GeneratorConfig cfg;
    cfg.n_frames = 96;
    for (uint64_t seed : {1ull, 2ull, 9ull}) {
        const DuetClip clip = generate_clip(seed, cfg);
        const Tensor& frames = clip.motion.frames_a;
        // mean joint speed from positions (independent of stored velocities)
        const int n = frames.rows;
        std::vector<double> speed(static_cast<size_t>(n - 1));
        for (int t = 0; t + 1 < n; ++t) {
            double s = 0;
            for (int j = 0; j < 22; ++j) {
                const double dx = frames.at(t + 1, 3 * j) - frames.at(t, 3 * j);
                const double dy = frames.at(t + 1, 3 * j + 1) - frames.at(t, 3 * j + 1);
                const double dz = frames.at(t + 1, 3 * j + 2) - frames.at(t, 3 * j + 2);
                s += std::sqrt(dx * dx + dy * dy + dz * dz);
            }
            speed[static_cast<size_t>(t)] = s / 22.0 * clip.motion.fps;
        }
        // local minima (boundaries count when below their single neighbor);
        // sample times are interval midpoints
        std::vector<double> minima_times;
        for (size_t t = 0; t < speed.size(); ++t) {
            const bool left_ok = t == 0 ? speed[t] < speed[t + 1] : speed[t] <= speed[t - 1];
            const bool right_ok =
                t + 1 == speed.size() ? speed[t] < speed[t - 1] : speed[t] <= speed[t + 1];
            if (left_ok && right_ok)
                minima_times.push_back((static_cast<double>(t) + 0.5) / clip.motion.fps);
        }
        REQUIRE(!minima_times.empty());
        for (double beat : clip.beat_times) {
            double best = 1e9;
            for (double m : minima_times) best = std::min(best, std::abs(m - beat));
            CHECK(best <= 1.0 / clip.motion.fps);
        }
    }
}

TEST_CASE("dataset generation writes a loadable manifest with bit-identical reload") {
    GeneratorConfig cfg;
    cfg.n_frames = 32;
    const auto dir = std::filesystem::temp_directory_path() / "dualflow_synth_test";
    std::filesystem::remove_all(dir);
    const Dataset ds = generate_dataset(4, cfg, dir.string());
    CHECK(ds.records.size() == 4);

    const Dataset loaded = load_dataset((dir / "manifest.jsonl").string());
    REQUIRE(loaded.records.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(loaded.records[i].clip_id == static_cast<int>(i));
        CHECK(loaded.records[i].text == ds.records[i].text);
        CHECK(loaded.records[i].beat_times == ds.records[i].beat_times);
        CHECK(loaded.records[i].decomposition.rhythm == ds.records[i].decomposition.rhythm);
    }

    // container payloads are float32, so reload matches the generated clip
    // to float precision
    const DuetClip direct = generate_clip(2, cfg);
    const DuetClip from_disk = load_clip(loaded, 2);
    CHECK(max_abs_diff(direct.motion.frames_a, from_disk.motion.frames_a) < 1e-5);
    CHECK(max_abs_diff(direct.music_features, from_disk.music_features) < 1e-5);
    std::filesystem::remove_all(dir);
}

TEST_CASE("generated text routes through the rule-based decomposer") {
    GeneratorConfig cfg;
    cfg.n_frames = 32;
    const DuetClip clip = generate_clip(1, cfg);
    // the stored decomposition is non-empty in all channels
    CHECK(!clip.decomposition.spatial.empty());
    CHECK(!clip.decomposition.body.empty());
    CHECK(!clip.decomposition.rhythm.empty());
}
