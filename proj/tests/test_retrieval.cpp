// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "dualflow/errors.hpp"
#include "dualflow/retrieval.hpp"
#include "dualflow/rng.hpp"

using namespace dualflow;

namespace {

std::vector<double> unit_vec(int dim, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(dim));
    double n2 = 0;
    for (auto& x : v) {
        x = rng.normal();
        n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (auto& x : v) x /= n;
    return v;
}

// Independent brute-force scorer: evaluates the similarity formula directly
// and fully sorts, mirroring the published scoring rule rather than the
// library implementation.
std::vector<ScoredEntry> brute_force(const std::vector<RetrievalEntry>& entries,
                                     const std::vector<double>& q, int lq, int k, double lambda,
                                     int exclude_clip) {
    std::vector<ScoredEntry> all;
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (exclude_clip >= 0 && e.clip_id == exclude_clip) continue;
        double dot = 0, ne = 0, nq = 0;
        for (size_t j = 0; j < q.size(); ++j) {
            dot += e.embedding[j] * q[j];
            ne += e.embedding[j] * e.embedding[j];
            nq += q[j] * q[j];
        }
        const double cosv = dot / (std::sqrt(ne) * std::sqrt(nq));
        const double pen = std::exp(-lambda * std::abs(e.length - lq) /
                                    static_cast<double>(std::max(e.length, lq)));
        all.push_back({cosv * pen, e.clip_id, e.length, i});
    }
    std::sort(all.begin(), all.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
        return a.score != b.score ? a.score > b.score : a.clip_id < b.clip_id;
    });
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<size_t>(k));
    return all;
}

}  // namespace

TEST_CASE("decompose_text routes template clauses by keyword") {
    const Decomposition d = decompose_text("closed hold, fast spin, quick triple step");
    CHECK(d.spatial == "closed hold");
    CHECK(d.body == "fast spin");
    CHECK(d.rhythm == "quick triple step");
}

TEST_CASE("decompose_text edge rules") {
    const Decomposition empty = decompose_text("");
    CHECK(empty.spatial.empty());
    CHECK(empty.body.empty());
    CHECK(empty.rhythm.empty());

    const std::string odd = "zzz qqq www";
    const Decomposition fallback = decompose_text(odd);
    CHECK(fallback.spatial == odd);
    CHECK(fallback.body == odd);
    CHECK(fallback.rhythm == odd);

    // deterministic
    const Decomposition a = decompose_text("open position, slow sway");
    const Decomposition b = decompose_text("open position, slow sway");
    CHECK(a.spatial == b.spatial);
    CHECK(a.body == b.body);
    CHECK(a.rhythm == b.rhythm);
}

TEST_CASE("similarity_score spot values") {
    Rng rng(1);
    const auto f = unit_vec(16, rng);

    // identity: same embedding, same length
    CHECK(similarity_score(f, f, 60, 60, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

    // orthogonal embeddings score zero at any lengths
    std::vector<double> e1(16, 0.0), e2(16, 0.0);
    e1[0] = 1.0;
    e2[1] = 1.0;
    CHECK(similarity_score(e1, e2, 10, 500, 2.0) == 0.0);

    // length penalty: exp(-1 * 60/120) = exp(-0.5)
    const double got = similarity_score(f, f, 60, 120, 1.0);
    CHECK(std::abs(got - std::exp(-0.5)) < 1e-12);

    // symmetry in embeddings and lengths
    const auto g = unit_vec(16, rng);
    CHECK(similarity_score(f, g, 31, 87, 0.7) ==
          doctest::Approx(similarity_score(g, f, 87, 31, 0.7)).epsilon(1e-15));

    // monotone non-increasing in |l_i - l_p| at fixed non-negative cosine
    double prev = 1e9;
    for (int l : {100, 120, 150, 199, 320}) {
        const double s = similarity_score(f, f, 100, l, 1.0);
        CHECK(s <= prev + 1e-15);
        prev = s;
    }

    CHECK_THROWS_AS(similarity_score(e1, std::vector<double>(8, 0.1), 5, 5, 1.0),
                    ValidationError);
    CHECK_THROWS_AS(similarity_score(f, f, 0, 5, 1.0), ValidationError);
}

TEST_CASE("retrieve_topk matches exhaustive brute force including tie order") {
    Rng rng(77);
    RetrievalDatabase db;
    db.dims = {24, 24, 24, 24};
    auto& entries = db.channels[0];
    for (int i = 0; i < 1000; ++i) {
        RetrievalEntry e;
        e.embedding = unit_vec(24, rng);
        e.length = 20 + static_cast<int>(rng.index(200));
        e.clip_id = i;
        entries.push_back(std::move(e));
    }
    // deliberate exact ties: duplicated embedding+length blocks
    for (int i = 0; i < 20; ++i) {
        RetrievalEntry e = entries[static_cast<size_t>(i * 3)];
        e.clip_id = 1000 + i;
        entries.push_back(std::move(e));
    }

    for (int trial = 0; trial < 50; ++trial) {
        const auto q = unit_vec(24, rng);
        const int lq = 20 + static_cast<int>(rng.index(200));
        const int k = 1 + static_cast<int>(rng.index(12));
        const int exclude = trial % 3 == 0 ? static_cast<int>(rng.index(1000)) : -1;
        const auto got = retrieve_topk(db, q, lq, Channel::S, k, 1.0, exclude);
        const auto want = brute_force(entries, q, lq, k, 1.0, exclude);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].clip_id == want[i].clip_id);
            CHECK(got[i].score == want[i].score);
        }
    }
}

TEST_CASE("retrieve_topk saturation, self-match and invalid channel") {
    Rng rng(5);
    RetrievalDatabase db;
    db.dims = {8, 8, 8, 8};
    for (int i = 0; i < 6; ++i)
        db.channels[1].push_back(RetrievalEntry{unit_vec(8, rng), 50 + i, i});

    // k larger than the channel returns the whole channel, sorted
    const auto q = db.channels[1][3].embedding;
    const auto all = retrieve_topk(db, q, 53, Channel::B, 99, 1.0);
    CHECK(all.size() == 6);
    for (size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);

    // exact stored embedding with equal length ranks first with score 1
    CHECK(all[0].clip_id == 3);
    CHECK(all[0].score == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(channel_from_name("Q"), ValidationError);
}

TEST_CASE("build_database over a synthetic dataset and persistence roundtrip") {
    GeneratorConfig cfg;
    cfg.n_frames = 32;
    const auto dir = std::filesystem::temp_directory_path() / "dualflow_retrieval_test";
    std::filesystem::remove_all(dir);
    const Dataset ds = generate_dataset(10, cfg, (dir / "data").string());

    TextFeaturizer text_enc(32);
    MusicFeaturizer music_enc(32);
    const RetrievalDatabase db = build_database(ds, text_enc, music_enc, 1.0);
    for (Channel c : kAllChannels) {
        CHECK(db.channel(c).size() == 10);
        for (const auto& e : db.channel(c)) {
            double n2 = 0;
            for (double v : e.embedding) n2 += v * v;
            CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-6);
            CHECK(e.length == 32);
        }
    }

    // rebuilding gives identical embeddings
    const RetrievalDatabase db2 = build_database(ds, text_enc, music_enc, 1.0);
    for (Channel c : kAllChannels)
        for (size_t i = 0; i < db.channel(c).size(); ++i)
            CHECK(db.channel(c)[i].embedding == db2.channel(c)[i].embedding);

    // save / load roundtrip preserves scores (float32 payload)
    save_database(db, (dir / "db").string());
    const RetrievalDatabase loaded = load_database((dir / "db").string());
    const auto q = text_enc.embed("a salsa duet with a fast spin");
    const auto a = retrieve_topk(db, q, 32, Channel::B, 3, 1.0);
    const auto b = retrieve_topk(loaded, q, 32, Channel::B, 3, 1.0);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].clip_id == b[i].clip_id);
        CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-6));
    }

    // leave-one-out drops the query clip
    const auto loo = retrieve_for_query(db, ds.records[4].decomposition, nullptr, 32, 3, 1.0,
                                        text_enc, music_enc, /*exclude=*/4);
    for (Channel c : {Channel::S, Channel::B, Channel::R})
        for (const auto& e : loo.at(c)) CHECK(e.clip_id != 4);

    std::filesystem::remove_all(dir);
}
