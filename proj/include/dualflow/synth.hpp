// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualflow/motion.hpp"
#include "dualflow/tensor.hpp"
#include "dualflow/text.hpp"

namespace dualflow {

struct GeneratorConfig {
    int n_frames = 64;
    double fps = 30.0;
    double tempo_min = 90.0;
    double tempo_max = 150.0;
    std::vector<std::string> genres = {"waltz", "jive", "salsa"};
    std::vector<std::string> interactions = {"closed hold", "spin", "approach"};
    double noise_scale = 0.1;
    uint64_t seed = 0;  // base salt, mixed with the per-clip seed
    int music_dim = 32;

    void validate() const;
    double duration_s() const { return n_frames / fps; }
};

struct DuetClip {
    int clip_id = 0;
    DuetSequence motion;
    std::string text;
    Decomposition decomposition;
    Tensor music_features;  // n_frames x music_dim
    std::vector<double> beat_times;
    std::string genre;
    std::string interaction;
    double tempo_bpm = 0.0;
};

// One manifest row; motion and music live in container files next to it.
struct DatasetRecord {
    int clip_id = 0;
    std::string motion_path;
    std::string music_path;
    std::string text;
    Decomposition decomposition;
    std::string genre;
    double tempo_bpm = 0.0;
    std::vector<double> beat_times;
};

struct Dataset {
    std::string root_dir;
    std::vector<DatasetRecord> records;

    size_t size() const { return records.size(); }
};

// Beats at k * 60 / tempo for k = 0, 1, ... strictly below the duration.
std::vector<double> beat_grid(double tempo_bpm, double duration_s);

// Deterministic in (seed, config). The two skeletons execute a genre-keyed
// pattern (orbit / spin / approach) driven by a per-beat smoothstep phase, so
// every joint speed has an exact zero at every beat time.
DuetClip generate_clip(uint64_t seed, const GeneratorConfig& config);

// Maps seeds 0..n-1 over generate_clip (clips may generate in parallel),
// writes .dfmo containers plus the JSON-lines manifest, ordered by seed.
Dataset generate_dataset(int n, const GeneratorConfig& config, const std::string& out_dir);

Dataset load_dataset(const std::string& manifest_path);

// Loads a full clip (motion + music) for a manifest record.
DuetClip load_clip(const Dataset& dataset, size_t index);

}  // namespace dualflow
