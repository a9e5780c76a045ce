// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dualflow/autograd.hpp"
#include "dualflow/motion.hpp"
#include "dualflow/synth.hpp"

namespace dualflow {

struct EvaluatorConfig {
    int feature_dim = 32;
    int motion_hidden = 64;
    int text_hash_buckets = 256;
    int train_steps = 300;
    int batch_size = 16;
    double lr = 0.01;
    double temperature = 0.1;  // InfoNCE softmax temperature
    uint64_t seed = 0;
};

// Two-tower feature extractor: a small temporal motion encoder and a
// bag-of-hashed-tokens text encoder, trained jointly with a symmetric InfoNCE
// margin contrastive objective on (motion, text) pairs, then frozen.
// Features are unit-normalized.
class FeatureExtractor {
public:
    explicit FeatureExtractor(const EvaluatorConfig& config);

    void train(const std::vector<DuetClip>& clips);
    bool trained() const { return trained_; }

    std::vector<double> motion_features(const DuetSequence& motion) const;
    std::vector<double> text_features(const std::string& text) const;

    void save(const std::string& prefix) const;
    void load(const std::string& prefix);
    const std::string& checkpoint_id() const { return checkpoint_id_; }

private:
    Var motion_tower(Tape& tape, const Tensor& duet_rows) const;
    Var text_tower(Tape& tape, const std::string& text) const;

    EvaluatorConfig config_;
    ParamStore store_;
    bool trained_ = false;
    std::string checkpoint_id_;
};

// Frechet distance between Gaussian fits. Sample covariances are unbiased;
// non-PSD roundoff is clamped at zero eigenvalues.
double fid(const std::vector<std::vector<double>>& real_features,
           const std::vector<std::vector<double>>& gen_features);

double fid_from_moments(const Tensor& mu_real, const Tensor& cov_real, const Tensor& mu_gen,
                        const Tensor& cov_gen);

struct RPrecisionResult {
    double top1 = 0, top2 = 0, top3 = 0;
    double mm_dist = 0;
};

// Within shuffled batches of batch_size, the fraction of items whose matched
// pair ranks in the top-k by Euclidean feature distance; ties break toward the
// lower candidate index. mm_dist is the mean matched-pair distance.
RPrecisionResult r_precision_and_mmdist(const std::vector<std::vector<double>>& text_features,
                                        const std::vector<std::vector<double>>& motion_features,
                                        int batch_size = 32, uint64_t seed = 0);

struct DiversityResult {
    double diversity = 0;   // mean pairwise distance across the whole set
    double mmodality = 0;   // mean within-group pairwise distance, averaged over groups
    int skipped_groups = 0; // groups of size 1
};

DiversityResult diversity_and_mmodality(const std::vector<std::vector<double>>& gen_features,
                                        const std::vector<std::vector<int>>& condition_groups,
                                        int n_pairs, uint64_t seed = 0);

// Local minima of the smoothed mean joint-speed curve, as times in seconds
// (interval midpoints). Accepts one person [T x 262] or a duet [T x 524].
std::vector<double> kinematic_beats(const Tensor& frames, double fps, int smoothing_window = 3);

// Mean over reference beats of exp(-min_k (t_k - b)^2 / (2 sigma^2)); zero
// when either list is empty. Invariant to translating both lists together and
// non-increasing as one list drifts away from the other.
double beat_alignment_from_lists(const std::vector<double>& reference_beats,
                                 const std::vector<double>& kinematic_beats, double sigma);

// The list kernel applied to the motion's detected kinematic beats.
double beat_align_score(const Tensor& frames, double fps, const std::vector<double>& music_beats,
                        double sigma = 0.1, int smoothing_window = 3);

// Directional echo: person B's kinematic beats scored against person A's.
double beat_echo_degree(const Tensor& frames_a, const Tensor& frames_b, double fps, double sigma,
                        int smoothing_window = 3);

struct MetricReport {
    double fid = 0;
    double r_top1 = 0, r_top2 = 0, r_top3 = 0;
    double mm_dist = 0;
    double diversity = 0;
    double mmodality = 0;
    double bed = 0;
    double bas = 0;
    std::string evaluator_checkpoint;
    std::string dataset_manifest_hash;
    uint64_t metric_seed = 0;

    std::string to_json() const;
};

}  // namespace dualflow
