// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dualflow/metrics.hpp"

using namespace dualflow;

namespace {

std::vector<std::vector<double>> gaussian_cloud(int n, int d, double mean, Rng& rng) {
    std::vector<std::vector<double>> out(static_cast<size_t>(n));
    for (auto& f : out) {
        f.resize(static_cast<size_t>(d));
        for (auto& v : f) v = mean + rng.normal();
    }
    return out;
}

}  // namespace

TEST_CASE("fid closed form: N(0,1) vs N(mu,1) in one dimension") {
    for (double mu : {0.0, 1.0, 2.0}) {
        const double got = fid_from_moments(Tensor::scalar(0.0), Tensor::scalar(1.0),
                                            Tensor::scalar(mu), Tensor::scalar(1.0));
        CHECK(std::abs(got - mu * mu) < 1e-8);
    }
    // 10^4-sample estimate of the mu = 2 case lands within +-0.1
    Rng rng(31);
    const auto real = gaussian_cloud(10000, 1, 0.0, rng);
    const auto gen = gaussian_cloud(10000, 1, 2.0, rng);
    const double est = fid(real, gen);
    CHECK(std::abs(est - 4.0) < 0.1);
}

TEST_CASE("fid is symmetric and zero on identical sets") {
    Rng rng(5);
    const auto a = gaussian_cloud(64, 8, 0.3, rng);
    const auto b = gaussian_cloud(64, 8, -0.2, rng);
    CHECK(std::abs(fid(a, a)) < 1e-8);
    CHECK(fid(a, b) == doctest::Approx(fid(b, a)).epsilon(1e-9));
    CHECK(fid(a, b) > 0.0);
}

TEST_CASE("r_precision: perfect alignment, chance level and tie handling") {
    Rng rng(7);

    // identical towers: top-1 = 1, mm_dist = 0
    const auto feats = gaussian_cloud(64, 16, 0.0, rng);
    const RPrecisionResult perfect = r_precision_and_mmdist(feats, feats, 32, 1);
    CHECK(perfect.top1 == 1.0);
    CHECK(perfect.mm_dist == 0.0);

    // independent random features approach k/32
    const auto text = gaussian_cloud(6400, 8, 0.0, rng);
    const auto motion = gaussian_cloud(6400, 8, 0.0, rng);
    const RPrecisionResult chance = r_precision_and_mmdist(text, motion, 32, 2);
    CHECK(std::abs(chance.top1 - 1.0 / 32) < 0.02);
    CHECK(std::abs(chance.top2 - 2.0 / 32) < 0.02);
    CHECK(std::abs(chance.top3 - 3.0 / 32) < 0.02);

    // duplicated pair features stay well-defined through the tie rule
    auto text_dup = gaussian_cloud(32, 4, 0.0, rng);
    auto motion_dup = text_dup;
    text_dup[5] = text_dup[4];
    motion_dup[5] = motion_dup[4];
    const RPrecisionResult tied = r_precision_and_mmdist(text_dup, motion_dup, 32, 3);
    CHECK(tied.top1 >= 30.0 / 32);  // only the duplicated pair may lose rank 0
    CHECK(std::isfinite(tied.top3));

    CHECK_THROWS_AS(r_precision_and_mmdist(gaussian_cloud(8, 4, 0, rng),
                                           gaussian_cloud(8, 4, 0, rng), 32, 0),
                    ValidationError);
}

TEST_CASE("diversity and mmodality separations") {
    Rng rng(9);

    // identical features: both zero
    std::vector<std::vector<double>> same(10, std::vector<double>(4, 0.5));
    const DiversityResult zero = diversity_and_mmodality(same, {{0, 1, 2}, {3, 4}}, 100, 1);
    CHECK(zero.diversity == 0.0);
    CHECK(zero.mmodality == 0.0);

    // two clusters separated by d: cross-pair distance concentrates near d as
    // the pair budget grows (two-point distribution oracle: half the pairs
    // cross clusters, so the mean tends to d/2... measured on cross pairs only)
    std::vector<std::vector<double>> clusters;
    const double d = 3.0;
    for (int i = 0; i < 50; ++i) clusters.push_back({0.0, 0.0});
    for (int i = 0; i < 50; ++i) clusters.push_back({d, 0.0});
    const DiversityResult two = diversity_and_mmodality(clusters, {}, 20000, 2);
    // expected mean pairwise distance: P(cross) * d with P(cross) ~ 50*50*2/(100*99)
    const double p_cross = 2.0 * 50.0 * 50.0 / (100.0 * 99.0);
    CHECK(two.diversity == doctest::Approx(p_cross * d).epsilon(0.05));

    // within-group identical, across-group distinct: mmodality 0, diversity > 0
    std::vector<std::vector<int>> groups = {{0, 1}, {2, 3}};
    std::vector<std::vector<double>> feats = {{0, 0}, {0, 0}, {5, 0}, {5, 0}};
    const DiversityResult sep = diversity_and_mmodality(feats, groups, 500, 3);
    CHECK(sep.mmodality == 0.0);
    CHECK(sep.diversity > 0.0);

    // singleton groups are skipped and reported
    const DiversityResult skip = diversity_and_mmodality(feats, {{0}, {1, 2}}, 10, 4);
    CHECK(skip.skipped_groups == 1);
}

TEST_CASE("kinematic beats: constant speed empty, sinusoid minima at integers") {
    // constant-velocity motion has no speed minima
    Tensor lin(60, 262);
    for (int t = 0; t < 60; ++t)
        for (int j = 0; j < 22; ++j) lin.at(t, 3 * j) = 0.125 * t;
    CHECK(kinematic_beats(lin, 30.0, 1).empty());

    // speed 1 - cos(2 pi t): x(t) = t - sin(2 pi t) / (2 pi), minima at integer t
    const double fps = 30.0;
    const int n = 91;  // three full periods at 30 fps
    Tensor swing(n, 262);
    for (int t = 0; t < n; ++t) {
        const double time = t / fps;
        const double x = time - std::sin(2 * M_PI * time) / (2 * M_PI);
        for (int j = 0; j < 22; ++j) swing.at(t, 3 * j) = x;
    }
    const auto beats = kinematic_beats(swing, fps, 1);
    REQUIRE(!beats.empty());
    for (double b : beats) {
        const double nearest = std::round(b);
        CHECK(std::abs(b - nearest) <= 1.0 / fps);
    }
    // all three integers are found
    for (double expect : {0.0, 1.0, 2.0}) {
        double best = 1e9;
        for (double b : beats) best = std::min(best, std::abs(b - expect));
        CHECK(best <= 1.0 / fps);
    }
}

TEST_CASE("kinematic beats on synthetic clips match the generator's beat grid") {
    GeneratorConfig cfg;
    cfg.n_frames = 96;
    for (uint64_t seed : {0ull, 4ull}) {
        const DuetClip clip = generate_clip(seed, cfg);
        const auto beats = kinematic_beats(clip.motion.frames_a, clip.motion.fps, 3);
        for (double gt : clip.beat_times) {
            double best = 1e9;
            for (double b : beats) best = std::min(best, std::abs(b - gt));
            CHECK(best <= 1.0 / clip.motion.fps);
        }
    }
}

TEST_CASE("beat alignment score spot values and calibration") {
    GeneratorConfig cfg;
    cfg.n_frames = 96;
    const DuetClip clip = generate_clip(3, cfg);

    // duet motion against its own music beats: the calibration anchor
    Tensor duet(cfg.n_frames, 524);
    for (int t = 0; t < cfg.n_frames; ++t)
        for (int j = 0; j < 262; ++j) {
            duet.at(t, j) = clip.motion.frames_a.at(t, j);
            duet.at(t, 262 + j) = clip.motion.frames_b.at(t, j);
        }
    const double bas = beat_align_score(duet, clip.motion.fps, clip.beat_times, 0.1);
    CHECK(bas >= 0.95);

    // kinematic beats equal to music beats score exactly 1
    const auto kin = kinematic_beats(duet, clip.motion.fps, 3);
    double self_score = 0;
    for (double b : kin) self_score += 1.0;  // direct: every beat matches itself
    (void)self_score;
    const double one = beat_align_score(duet, clip.motion.fps, kin, 0.1);
    CHECK(one == 1.0);

    // no kinematic beats scores zero
    Tensor lin(30, 262);
    for (int t = 0; t < 30; ++t)
        for (int j = 0; j < 22; ++j) lin.at(t, 3 * j) = 0.25 * t;
    CHECK(beat_align_score(lin, 30.0, {0.1, 0.5}, 0.1) == 0.0);

    // every beat offset by sigma scores exp(-1/2)
    const std::vector<double> base = {0.5, 1.0, 1.5, 2.0};
    std::vector<double> shifted = base;
    for (double& b : shifted) b += 0.1;
    double acc = 0;
    for (size_t i = 0; i < base.size(); ++i)
        acc += std::exp(-(shifted[i] - base[i]) * (shifted[i] - base[i]) / (2 * 0.01));
    // direct kernel check through the public scorer: craft motion whose beats
    // sit exactly on `base` is brittle; validate the kernel arithmetic instead
    CHECK(acc / base.size() == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("beat alignment kernel: translation invariance and monotone drift") {
    const std::vector<double> reference = {0.5, 1.0, 1.5, 2.0, 2.5};
    const std::vector<double> kinematic = {0.52, 1.03, 1.47, 2.0, 2.55};
    const double base = beat_alignment_from_lists(reference, kinematic, 0.1);

    // translating BOTH lists leaves the score unchanged
    for (double shift : {-3.0, 0.7, 12.25}) {
        std::vector<double> r2 = reference, k2 = kinematic;
        for (double& v : r2) v += shift;
        for (double& v : k2) v += shift;
        CHECK(beat_alignment_from_lists(r2, k2, 0.1) == doctest::Approx(base).epsilon(1e-12));
    }

    // a growing uniform offset of one list strictly decreases the score up to
    // half the beat period (0.5 s here)
    double prev = beat_alignment_from_lists(reference, reference, 0.1);
    CHECK(prev == 1.0);
    for (double offset : {0.05, 0.1, 0.15, 0.2, 0.25}) {
        std::vector<double> drifted = reference;
        for (double& v : drifted) v += offset;
        const double s = beat_alignment_from_lists(reference, drifted, 0.1);
        CHECK(s < prev);
        prev = s;
    }

    // every beat offset by sigma scores exp(-1/2)
    std::vector<double> off_by_sigma = reference;
    for (double& v : off_by_sigma) v += 0.1;
    CHECK(beat_alignment_from_lists(reference, off_by_sigma, 0.1) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

    CHECK(beat_alignment_from_lists(reference, {}, 0.1) == 0.0);
}

TEST_CASE("beat echo degree: self echo is one, constant follower is zero") {
    GeneratorConfig cfg;
    cfg.n_frames = 64;
    const DuetClip clip = generate_clip(6, cfg);
    const double self_echo =
        beat_echo_degree(clip.motion.frames_a, clip.motion.frames_a, clip.motion.fps, 0.1);
    CHECK(self_echo == 1.0);

    Tensor lin(64, 262);
    for (int t = 0; t < 64; ++t)
        for (int j = 0; j < 22; ++j) lin.at(t, 3 * j) = 0.0625 * t;
    CHECK(beat_echo_degree(clip.motion.frames_a, lin, clip.motion.fps, 0.1) == 0.0);

    // a synchronized duet echoes strongly
    const double duet_echo =
        beat_echo_degree(clip.motion.frames_a, clip.motion.frames_b, clip.motion.fps, 0.1);
    CHECK(duet_echo > 0.9);
}

TEST_CASE("feature extractor trains, freezes and separates text/motion pairs") {
    GeneratorConfig cfg;
    cfg.n_frames = 32;
    std::vector<DuetClip> clips;
    for (uint64_t s = 0; s < 12; ++s) clips.push_back(generate_clip(s, cfg));

    EvaluatorConfig ec;
    ec.train_steps = 150;
    ec.seed = 11;
    FeatureExtractor extractor(ec);
    extractor.train(clips);
    CHECK(extractor.trained());
    CHECK(!extractor.checkpoint_id().empty());

    // determinism after freezing
    const auto f1 = extractor.motion_features(clips[0].motion);
    const auto f2 = extractor.motion_features(clips[0].motion);
    CHECK(f1 == f2);
    // unit norm
    double n2 = 0;
    for (double v : f1) n2 += v * v;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));

    // matched pairs sit closer than mismatched ones on average
    double matched = 0, mismatched = 0;
    int mm = 0;
    for (size_t i = 0; i < clips.size(); ++i) {
        const auto m = extractor.motion_features(clips[i].motion);
        for (size_t j = 0; j < clips.size(); ++j) {
            const auto t = extractor.text_features(clips[j].text);
            double d = 0;
            for (size_t k = 0; k < m.size(); ++k) d += (m[k] - t[k]) * (m[k] - t[k]);
            if (i == j)
                matched += std::sqrt(d);
            else {
                mismatched += std::sqrt(d);
                ++mm;
            }
        }
    }
    matched /= static_cast<double>(clips.size());
    mismatched /= mm;
    CHECK(matched < mismatched);

    // save / load keeps the fingerprint and outputs
    const auto dir = std::filesystem::temp_directory_path() / "dualflow_eval_ckpt";
    std::filesystem::create_directories(dir);
    extractor.save((dir / "eval").string());
    FeatureExtractor loaded(ec);
    loaded.load((dir / "eval").string());
    CHECK(loaded.checkpoint_id() == extractor.checkpoint_id());
    const auto g1 = loaded.motion_features(clips[0].motion);
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(f1[i]).epsilon(1e-6));
    std::filesystem::remove_all(dir);
}

TEST_CASE("metric report serializes to json with provenance fields") {
    MetricReport r;
    r.fid = 1.5;
    r.r_top1 = 0.5;
    r.evaluator_checkpoint = "abc123";
    r.dataset_manifest_hash = "ff00";
    r.metric_seed = 7;
    const std::string j = r.to_json();
    CHECK(j.find("\"fid\"") != std::string::npos);
    CHECK(j.find("abc123") != std::string::npos);
    CHECK(j.find("\"metric_seed\": 7") != std::string::npos);
}
