// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dualflow/synth.hpp"
#include "dualflow/tensor.hpp"
#include "dualflow/text.hpp"

namespace dualflow {

// Retrieval channels: spatial, body, rhythm (text) and music.
enum class Channel : int { S = 0, B = 1, R = 2, M = 3 };

inline constexpr std::array<Channel, 4> kAllChannels = {Channel::S, Channel::B, Channel::R,
                                                        Channel::M};
const char* channel_name(Channel c);
Channel channel_from_name(const std::string& name);

struct RetrievalEntry {
    std::vector<double> embedding;  // unit L2 norm
    int length = 0;                 // frames
    int clip_id = 0;
};

struct RetrievalDatabase {
    std::array<std::vector<RetrievalEntry>, 4> channels;
    std::array<int, 4> dims = {0, 0, 0, 0};
    double lambda_default = 1.0;

    const std::vector<RetrievalEntry>& channel(Channel c) const {
        return channels[static_cast<size_t>(c)];
    }
};

struct ScoredEntry {
    double score = 0.0;
    int clip_id = 0;
    int length = 0;
    size_t entry_index = 0;  // into the channel's entry list
};

// Top-k entries per channel, each sorted by descending score with ties broken
// by ascending clip_id.
struct RetrievedSets {
    std::array<std::vector<ScoredEntry>, 4> sets;

    const std::vector<ScoredEntry>& at(Channel c) const { return sets[static_cast<size_t>(c)]; }
    bool empty() const;
};

// Deterministic embedding of text into a unit vector: tokens hash to fixed
// Gaussian codes that are summed and normalized. Stands in for the pretrained
// text encoder on the retrieval side; no trainable state.
class TextFeaturizer {
public:
    explicit TextFeaturizer(int dim = 64, uint64_t seed = 0x7ee7) : dim_(dim), seed_(seed) {}
    int dim() const { return dim_; }
    std::vector<double> embed(const std::string& text) const;

private:
    int dim_;
    uint64_t seed_;
};

// Deterministic embedding of a music-feature sequence: per-dimension mean and
// standard deviation over time through a fixed random projection, normalized.
class MusicFeaturizer {
public:
    explicit MusicFeaturizer(int dim = 64, uint64_t seed = 0x50a1) : dim_(dim), seed_(seed) {}
    int dim() const { return dim_; }
    std::vector<double> embed(const Tensor& features) const;

private:
    int dim_;
    uint64_t seed_;
};

// Cosine similarity damped by relative length mismatch:
//   score = cos(f_i, f_p) * exp(-lambda * |l_i - l_p| / max(l_i, l_p)).
double similarity_score(const std::vector<double>& f_i, const std::vector<double>& f_p, int l_i,
                        int l_p, double lambda_len);

// One entry per clip per channel; S/B/R embed the decomposition fields, M
// pools the clip's music features. An encoder failure aborts naming the clip.
RetrievalDatabase build_database(const Dataset& dataset, const TextFeaturizer& text_encoder,
                                 const MusicFeaturizer& music_encoder,
                                 double lambda_default = 1.0);

// Exact flat-scan top-k. Set exclude_clip_id >= 0 for leave-one-out queries.
std::vector<ScoredEntry> retrieve_topk(const RetrievalDatabase& db,
                                       const std::vector<double>& query_embedding,
                                       int query_length, Channel channel, int k,
                                       double lambda_len, int exclude_clip_id = -1);

// Queries all four channels with the decomposition's per-channel embeddings
// and the pooled music embedding (music may be absent -> empty M channel).
RetrievedSets retrieve_for_query(const RetrievalDatabase& db, const Decomposition& decomposition,
                                 const Tensor* music_features, int query_length, int k,
                                 double lambda_len, const TextFeaturizer& text_encoder,
                                 const MusicFeaturizer& music_encoder, int exclude_clip_id = -1);

// Persistence: db_manifest.json + one embedding container per channel.
void save_database(const RetrievalDatabase& db, const std::string& dir);
RetrievalDatabase load_database(const std::string& dir);

}  // namespace dualflow
