// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <vector>

namespace dualflow {

namespace {

const std::vector<std::string>& spatial_keywords() {
    static const std::vector<std::string> kw = {
        "hold",     "position", "facing",      "apart",    "close",    "open",
        "frame",    "distance", "toward",      "together", "separate", "side",
        "behind",   "front",    "proximity",   "orient",   "handhold", "hand-to-hand",
        "connect",  "center",   "circle",      "around"};
    return kw;
}

const std::vector<std::string>& body_keywords() {
    static const std::vector<std::string> kw = {
        "spin",  "turn",  "step",  "arm",   "leg",     "torso", "shoulder", "head",
        "roll",  "kick",  "dip",   "lift",  "sway",    "postur", "body",    "hand",
        "wrist", "elbow", "knee",  "foot",  "feet",    "gesture", "energy", "travel"};
    return kw;
}

const std::vector<std::string>& rhythm_keywords() {
    static const std::vector<std::string> kw = {
        "tempo", "beat",  "rhythm", "timing", "quick", "slow",   "fast",  "pace",
        "music", "triple", "count", "bpm",    "in time", "stepping", "sync", "flow"};
    return kw;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

int count_hits(const std::string& lowered, const std::vector<std::string>& keywords) {
    int hits = 0;
    for (const auto& k : keywords)
        if (lowered.find(k) != std::string::npos) ++hits;
    return hits;
}

void append_clause(std::string& field, const std::string& clause) {
    if (!field.empty()) field += ", ";
    field += clause;
}

}  // namespace

Decomposition decompose_text(const std::string& text) {
    Decomposition out;
    std::vector<std::string> clauses;
    std::string current;
    for (char c : text) {
        if (c == ',' || c == '.' || c == ';') {
            const std::string t = trim(current);
            if (!t.empty()) clauses.push_back(t);
            current.clear();
        } else {
            current += c;
        }
    }
    const std::string tail = trim(current);
    if (!tail.empty()) clauses.push_back(tail);

    bool any_routed = false;
    for (const auto& clause : clauses) {
        const std::string lowered = lowercase(clause);
        const std::array<int, 3> hits = {count_hits(lowered, spatial_keywords()),
                                         count_hits(lowered, body_keywords()),
                                         count_hits(lowered, rhythm_keywords())};
        const int best = std::max({hits[0], hits[1], hits[2]});
        if (best == 0) continue;
        any_routed = true;
        if (hits[0] == best) append_clause(out.spatial, clause);
        else if (hits[1] == best) append_clause(out.body, clause);
        else append_clause(out.rhythm, clause);
    }

    if (!any_routed) {
        // fallback: the whole prompt in all three channels (empty stays empty)
        out.spatial = text;
        out.body = text;
        out.rhythm = text;
    }
    return out;
}

}  // namespace dualflow
