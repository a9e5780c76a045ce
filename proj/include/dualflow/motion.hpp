// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "dualflow/tensor.hpp"

namespace dualflow {

// Joint hierarchy with per-bone lengths. Joint 0 is the root (parent -1).
struct Skeleton {
    int joint_count = 0;
    std::vector<int> parent_index;      // parent_index[0] == -1
    std::vector<double> bone_lengths;   // bone_lengths[j] = |joint j - parent|, j >= 1
    std::vector<int> end_effector_set;  // feet, hands, hips
    std::array<int, 4> foot_joints{};   // left heel, left toe, right heel, right toe

    void validate() const;
};

// 22-joint humanoid in the usual pelvis-rooted layout (y up, meters).
Skeleton default_skeleton();

// Offsets of the channel groups inside a packed per-frame vector:
// [ global positions | global velocities | 6D rotations (non-root) | contacts ].
struct MotionLayout {
    int joint_count = 22;

    int positions_offset() const { return 0; }
    int velocities_offset() const { return 3 * joint_count; }
    int rotations_offset() const { return 6 * joint_count; }
    int contacts_offset() const { return 12 * joint_count - 6; }
    int rotations_size() const { return 6 * (joint_count - 1); }
    int frame_dim() const { return 12 * joint_count - 6 + 4; }
};

struct FrameVector {
    std::vector<double> positions;    // 3*Nj
    std::vector<double> velocities;   // 3*Nj
    std::vector<double> rotations6d;  // 6*(Nj-1)
    std::vector<double> contacts;     // 4, binary
};

// Paired per-frame motion, persons A and B in a shared frame anchored at
// person A's frame-0 root. Rows are packed frame vectors.
struct DuetSequence {
    Tensor frames_a;  // [N x frame_dim]
    Tensor frames_b;  // [N x frame_dim]
    double fps = 30.0;

    int n_frames() const { return frames_a.rows; }
};

std::vector<double> pack_frame(const MotionLayout& layout, const FrameVector& frame);
FrameVector unpack_frame(const MotionLayout& layout, const std::vector<double>& packed);

// Forward difference scaled by fps; the final frame repeats the penultimate
// velocity. A single frame yields zeros.
Tensor compute_velocities(const Tensor& positions_per_frame, double fps);

// contact = 1 iff foot-joint speed < speed_threshold and foot height (y)
// < height_threshold. Columns follow Skeleton::foot_joints order.
Tensor detect_foot_contacts(const Tensor& positions_per_frame, double fps,
                            const Skeleton& skeleton, double speed_threshold = 0.1,
                            double height_threshold = 0.05);

// Subtracts person A's frame-0 root position from all global positions of both
// persons. Rotations, velocities and contacts are unchanged. Idempotent.
DuetSequence to_relative_frame(const DuetSequence& duet, const MotionLayout& layout);

// 6D rotation convention: the first two columns of the rotation matrix,
// stored column 0 then column 1.
std::array<double, 6> rotation_to_6d(const std::array<double, 9>& rot_row_major);
// Gram-Schmidt reconstruction of a proper rotation from a (possibly noisy) 6D value.
std::array<double, 9> rotation_from_6d(const std::array<double, 6>& r6);

// Per-frame bone lengths recomputed from packed global positions: [N x (Nj-1)],
// column j-1 is |p_j - p_parent(j)|.
Tensor bone_lengths_from_positions(const Tensor& frames, const MotionLayout& layout,
                                   const Skeleton& skeleton);

}  // namespace dualflow
