// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "dualflow/autograd.hpp"

namespace dualflow {

// Checkpoint layout: <prefix>.json manifest (config echo + parameter name ->
// shape/offset table) plus <prefix>.bin, a single little-endian float32
// payload of all parameters in registry order.
struct CheckpointInfo {
    std::string checkpoint_id;  // FNV-1a of the payload bytes, hex
    std::map<std::string, std::string> config_echo;
};

CheckpointInfo save_checkpoint(const std::string& prefix, const ParamStore& store,
                               const std::map<std::string, std::string>& config_echo);

// Loads values into an existing store; every manifest entry must match an
// existing parameter's shape.
CheckpointInfo load_checkpoint(const std::string& prefix, ParamStore& store);

// Reads just the manifest (config echo + id) without touching parameters.
CheckpointInfo read_checkpoint_info(const std::string& prefix);

}  // namespace dualflow
