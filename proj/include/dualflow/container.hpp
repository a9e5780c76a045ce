// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dualflow/motion.hpp"
#include "dualflow/tensor.hpp"

namespace dualflow {

// ".dfmo" container: one UTF-8 header line holding a JSON object
// {schema_version, fps, n_frames, n_persons, joint_count}, a newline, then a
// raw little-endian float32 payload of shape n_persons x n_frames x frame_dim,
// person-major. For motion files frame_dim = 12*joint_count - 6 + 4; feature
// files reuse the container with n_persons = 1 and joint_count carrying the
// feature dimension (frame_dim = joint_count).

inline constexpr int kContainerSchemaVersion = 1;

void write_motion_container(const std::string& path, const DuetSequence& duet, int joint_count);

// Rejects payloads whose byte length does not match the header.
DuetSequence read_motion_container(const std::string& path, int* joint_count_out = nullptr);

void write_feature_container(const std::string& path, const Tensor& features, double fps);

Tensor read_feature_container(const std::string& path, double* fps_out = nullptr);

// FNV-1a of a file's bytes, as a hex string (manifest hashes in reports).
std::string file_hash_hex(const std::string& path);

}  // namespace dualflow
