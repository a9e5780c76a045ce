// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace dualflow {

// Three focused descriptions of a duet prompt: spatial relationship
// (proximity, orientation, handholds), body movement (actions, body parts,
// posture) and rhythm (timing, musicality, stepping).
struct Decomposition {
    std::string spatial;
    std::string body;
    std::string rhythm;
};

// Rule-based prompt decomposition over the synthetic template vocabulary.
// Splits the prompt into clauses and routes each clause to the channel with
// the most keyword hits (ties resolved spatial > body > rhythm). A prompt with
// no routed keywords is copied whole into all three fields, so precomputed
// decompositions from an external decomposer can always be supplied instead.
Decomposition decompose_text(const std::string& text);

}  // namespace dualflow
