// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dualflow/container.hpp"
#include "dualflow/errors.hpp"
#include "dualflow/rng.hpp"

namespace dualflow {

namespace {

using nlohmann::json;

void normalize(std::vector<double>& v) {
    double n2 = 0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n > 0)
        for (double& x : v) x /= n;
}

}  // namespace

const char* channel_name(Channel c) {
    switch (c) {
        case Channel::S: return "S";
        case Channel::B: return "B";
        case Channel::R: return "R";
        case Channel::M: return "M";
    }
    return "?";
}

Channel channel_from_name(const std::string& name) {
    if (name == "S" || name == "spatial") return Channel::S;
    if (name == "B" || name == "body") return Channel::B;
    if (name == "R" || name == "rhythm") return Channel::R;
    if (name == "M" || name == "music") return Channel::M;
    throw ValidationError("unknown retrieval channel '" + name + "' (expected S, B, R or M)");
}

bool RetrievedSets::empty() const {
    for (const auto& s : sets)
        if (!s.empty()) return false;
    return true;
}

std::vector<double> TextFeaturizer::embed(const std::string& text) const {
    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    std::string token;
    int tokens = 0;
    auto flush = [&]() {
        if (token.empty()) return;
        Rng code(Rng::mix(seed_, Rng::hash_string(token)));
        for (auto& v : out) v += code.normal();
        ++tokens;
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    if (tokens == 0) {
        Rng code(Rng::mix(seed_, Rng::hash_string("<empty>")));
        for (auto& v : out) v = code.normal();
    }
    normalize(out);
    return out;
}

std::vector<double> MusicFeaturizer::embed(const Tensor& features) const {
    require(features.rows >= 1, "MusicFeaturizer: empty feature sequence");
    const int d = features.cols;
    std::vector<double> pooled(static_cast<size_t>(2 * d), 0.0);
    for (int j = 0; j < d; ++j) {
        double mean = 0;
        for (int t = 0; t < features.rows; ++t) mean += features.at(t, j);
        mean /= features.rows;
        double var = 0;
        for (int t = 0; t < features.rows; ++t) {
            const double c = features.at(t, j) - mean;
            var += c * c;
        }
        pooled[static_cast<size_t>(j)] = mean;
        pooled[static_cast<size_t>(d + j)] = std::sqrt(var / features.rows);
    }
    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    // fixed projection row per pooled coordinate, independent of d
    for (size_t i = 0; i < pooled.size(); ++i) {
        if (pooled[i] == 0.0) continue;
        Rng row(Rng::mix(seed_, i));
        for (auto& v : out) v += pooled[i] * row.normal();
    }
    normalize(out);
    if (std::all_of(out.begin(), out.end(), [](double v) { return v == 0.0; })) {
        Rng row(Rng::mix(seed_, 0x11));
        for (auto& v : out) v = row.normal();
        normalize(out);
    }
    return out;
}

double similarity_score(const std::vector<double>& f_i, const std::vector<double>& f_p, int l_i,
                        int l_p, double lambda_len) {
    require(f_i.size() == f_p.size(),
            "similarity_score: embedding dimensions differ (" + std::to_string(f_i.size()) +
                " vs " + std::to_string(f_p.size()) + ")");
    require(l_i >= 1 && l_p >= 1, "similarity_score: lengths must be >= 1");
    // plain left-to-right accumulation: scores must agree bit-for-bit with a
    // naive evaluation of the formula (the retrieval-equivalence contract)
    double dot = 0, ni2 = 0, np2 = 0;
    for (size_t j = 0; j < f_i.size(); ++j) {
        dot += f_i[j] * f_p[j];
        ni2 += f_i[j] * f_i[j];
        np2 += f_p[j] * f_p[j];
    }
    const double ni = std::sqrt(ni2), np = std::sqrt(np2);
    // Cauchy-Schwarz equality: identical vectors have cosine exactly 1
    const double cosv = (ni2 == 0.0 || np2 == 0.0) ? 0.0
                        : (dot == ni2 && dot == np2) ? 1.0
                                                     : dot / (ni * np);
    const double penalty =
        std::exp(-lambda_len * std::abs(l_i - l_p) / static_cast<double>(std::max(l_i, l_p)));
    return cosv * penalty;
}

RetrievalDatabase build_database(const Dataset& dataset, const TextFeaturizer& text_encoder,
                                 const MusicFeaturizer& music_encoder, double lambda_default) {
    require(!dataset.records.empty(), "build_database: dataset is empty");
    RetrievalDatabase db;
    db.lambda_default = lambda_default;
    db.dims = {text_encoder.dim(), text_encoder.dim(), text_encoder.dim(), music_encoder.dim()};
    for (const DatasetRecord& rec : dataset.records) {
        try {
            const Tensor music = read_feature_container(dataset.root_dir + "/" + rec.music_path);
            const int length = music.rows;  // music rows equal the clip frame count
            auto push = [&](Channel c, std::vector<double> emb) {
                db.channels[static_cast<size_t>(c)].push_back(
                    RetrievalEntry{std::move(emb), length, rec.clip_id});
            };
            push(Channel::S, text_encoder.embed(rec.decomposition.spatial));
            push(Channel::B, text_encoder.embed(rec.decomposition.body));
            push(Channel::R, text_encoder.embed(rec.decomposition.rhythm));
            push(Channel::M, music_encoder.embed(music));
        } catch (const std::exception& e) {
            throw std::runtime_error("build_database: failed on clip " +
                                     std::to_string(rec.clip_id) + ": " + e.what());
        }
    }
    return db;
}

std::vector<ScoredEntry> retrieve_topk(const RetrievalDatabase& db,
                                       const std::vector<double>& query_embedding,
                                       int query_length, Channel channel, int k,
                                       double lambda_len, int exclude_clip_id) {
    require(k >= 1, "retrieve_topk: k must be >= 1");
    const int ci = static_cast<int>(channel);
    require(ci >= 0 && ci < 4, "retrieve_topk: unknown channel");
    const auto& entries = db.channels[static_cast<size_t>(ci)];
    std::vector<ScoredEntry> scored;
    scored.reserve(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        const RetrievalEntry& e = entries[i];
        if (exclude_clip_id >= 0 && e.clip_id == exclude_clip_id) continue;
        scored.push_back(ScoredEntry{
            similarity_score(e.embedding, query_embedding, e.length, query_length, lambda_len),
            e.clip_id, e.length, i});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.clip_id < b.clip_id;
    });
    if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<size_t>(k));
    return scored;
}

RetrievedSets retrieve_for_query(const RetrievalDatabase& db, const Decomposition& decomposition,
                                 const Tensor* music_features, int query_length, int k,
                                 double lambda_len, const TextFeaturizer& text_encoder,
                                 const MusicFeaturizer& music_encoder, int exclude_clip_id) {
    RetrievedSets sets;
    sets.sets[0] = retrieve_topk(db, text_encoder.embed(decomposition.spatial), query_length,
                                 Channel::S, k, lambda_len, exclude_clip_id);
    sets.sets[1] = retrieve_topk(db, text_encoder.embed(decomposition.body), query_length,
                                 Channel::B, k, lambda_len, exclude_clip_id);
    sets.sets[2] = retrieve_topk(db, text_encoder.embed(decomposition.rhythm), query_length,
                                 Channel::R, k, lambda_len, exclude_clip_id);
    if (music_features != nullptr)
        sets.sets[3] = retrieve_topk(db, music_encoder.embed(*music_features), query_length,
                                     Channel::M, k, lambda_len, exclude_clip_id);
    return sets;
}

void save_database(const RetrievalDatabase& db, const std::string& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["lambda_default"] = db.lambda_default;
    manifest["channels"] = json::array();
    for (Channel c : kAllChannels) {
        const auto& entries = db.channel(c);
        json ch;
        ch["name"] = channel_name(c);
        ch["dim"] = db.dims[static_cast<size_t>(c)];
        json clip_ids = json::array(), lengths = json::array();
        for (const auto& e : entries) {
            clip_ids.push_back(e.clip_id);
            lengths.push_back(e.length);
        }
        ch["clip_ids"] = clip_ids;
        ch["lengths"] = lengths;
        ch["embeddings_path"] = std::string("emb_") + channel_name(c) + ".dfmo";
        manifest["channels"].push_back(ch);

        Tensor emb(static_cast<int>(entries.size()), db.dims[static_cast<size_t>(c)]);
        for (size_t i = 0; i < entries.size(); ++i)
            std::copy(entries[i].embedding.begin(), entries[i].embedding.end(),
                      emb.row(static_cast<int>(i)));
        write_feature_container(dir + "/" + ch["embeddings_path"].get<std::string>(), emb, 0.0);
    }
    std::ofstream out(dir + "/db_manifest.json");
    require(out.is_open(), "save_database: cannot write manifest in '" + dir + "'");
    out << manifest.dump(2) << "\n";
    require(out.good(), "save_database: manifest write failed");
}

RetrievalDatabase load_database(const std::string& dir) {
    std::ifstream in(dir + "/db_manifest.json");
    require(in.is_open(), "load_database: cannot open '" + dir + "/db_manifest.json'");
    json manifest = json::parse(in, nullptr, false);
    require(!manifest.is_discarded(), "load_database: malformed manifest");
    RetrievalDatabase db;
    db.lambda_default = manifest.at("lambda_default").get<double>();
    for (const auto& ch : manifest.at("channels")) {
        const Channel c = channel_from_name(ch.at("name").get<std::string>());
        const size_t ci = static_cast<size_t>(c);
        db.dims[ci] = ch.at("dim").get<int>();
        const auto clip_ids = ch.at("clip_ids").get<std::vector<int>>();
        const auto lengths = ch.at("lengths").get<std::vector<int>>();
        const Tensor emb =
            read_feature_container(dir + "/" + ch.at("embeddings_path").get<std::string>());
        require(emb.rows == static_cast<int>(clip_ids.size()) && emb.cols == db.dims[ci],
                "load_database: embedding table shape mismatch for channel " +
                    std::string(channel_name(c)));
        for (size_t i = 0; i < clip_ids.size(); ++i) {
            RetrievalEntry e;
            e.embedding.assign(emb.row(static_cast<int>(i)),
                               emb.row(static_cast<int>(i)) + emb.cols);
            e.clip_id = clip_ids[i];
            e.length = lengths[i];
            db.channels[ci].push_back(std::move(e));
        }
    }
    return db;
}

}  // namespace dualflow
