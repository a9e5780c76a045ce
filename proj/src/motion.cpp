// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/motion.hpp"

#include <cmath>
#include <cstring>

#include "dualflow/errors.hpp"

namespace dualflow {

void Skeleton::validate() const {
    require(joint_count >= 2, "Skeleton: joint_count must be at least 2");
    require(static_cast<int>(parent_index.size()) == joint_count,
            "Skeleton: parent_index size mismatch");
    require(parent_index[0] == -1, "Skeleton: joint 0 must be the root (parent -1)");
    for (int j = 1; j < joint_count; ++j) {
        require(parent_index[j] >= 0 && parent_index[j] < j,
                "Skeleton: parent of joint " + std::to_string(j) +
                    " must precede it (tree rooted at 0)");
    }
    require(static_cast<int>(bone_lengths.size()) == joint_count,
            "Skeleton: bone_lengths size mismatch");
    for (int j = 1; j < joint_count; ++j)
        require(bone_lengths[j] > 0, "Skeleton: bone length of joint " + std::to_string(j) +
                                         " must be positive");
    for (int e : end_effector_set)
        require(e >= 0 && e < joint_count, "Skeleton: end effector index out of range");
    for (int f : foot_joints)
        require(f >= 0 && f < joint_count, "Skeleton: foot joint index out of range");
}

Skeleton default_skeleton() {
    // SMPL-style 22 joint hierarchy:
    //  0 pelvis, 1 l_hip, 2 r_hip, 3 spine1, 4 l_knee, 5 r_knee, 6 spine2,
    //  7 l_ankle, 8 r_ankle, 9 spine3, 10 l_foot, 11 r_foot, 12 neck,
    // 13 l_collar, 14 r_collar, 15 head, 16 l_shoulder, 17 r_shoulder,
    // 18 l_elbow, 19 r_elbow, 20 l_wrist, 21 r_wrist
    Skeleton s;
    s.joint_count = 22;
    s.parent_index = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    s.bone_lengths = {0.0,  0.10, 0.10, 0.12, 0.38, 0.38, 0.14, 0.40, 0.40, 0.14, 0.14,
                      0.14, 0.10, 0.10, 0.10, 0.12, 0.12, 0.12, 0.26, 0.26, 0.25, 0.25};
    s.end_effector_set = {0, 7, 8, 10, 11, 20, 21};
    s.foot_joints = {7, 10, 8, 11};  // left heel, left toe, right heel, right toe
    return s;
}

std::vector<double> pack_frame(const MotionLayout& layout, const FrameVector& frame) {
    const int jc = layout.joint_count;
    require(static_cast<int>(frame.positions.size()) == 3 * jc,
            "pack_frame: positions must have " + std::to_string(3 * jc) + " values, got " +
                std::to_string(frame.positions.size()));
    require(static_cast<int>(frame.velocities.size()) == 3 * jc,
            "pack_frame: velocities must have " + std::to_string(3 * jc) + " values, got " +
                std::to_string(frame.velocities.size()));
    require(static_cast<int>(frame.rotations6d.size()) == layout.rotations_size(),
            "pack_frame: rotations6d must have " + std::to_string(layout.rotations_size()) +
                " values, got " + std::to_string(frame.rotations6d.size()));
    require(static_cast<int>(frame.contacts.size()) == 4,
            "pack_frame: contacts must have 4 values, got " +
                std::to_string(frame.contacts.size()));
    for (double c : frame.contacts)
        require(c == 0.0 || c == 1.0, "pack_frame: contacts must be binary");
    for (double r : frame.rotations6d)
        require(std::isfinite(r), "pack_frame: rotations6d must be finite");

    std::vector<double> out;
    out.reserve(static_cast<size_t>(layout.frame_dim()));
    out.insert(out.end(), frame.positions.begin(), frame.positions.end());
    out.insert(out.end(), frame.velocities.begin(), frame.velocities.end());
    out.insert(out.end(), frame.rotations6d.begin(), frame.rotations6d.end());
    out.insert(out.end(), frame.contacts.begin(), frame.contacts.end());
    return out;
}

FrameVector unpack_frame(const MotionLayout& layout, const std::vector<double>& packed) {
    require(static_cast<int>(packed.size()) == layout.frame_dim(),
            "unpack_frame: expected " + std::to_string(layout.frame_dim()) + " values, got " +
                std::to_string(packed.size()));
    FrameVector f;
    auto it = packed.begin();
    f.positions.assign(it, it + 3 * layout.joint_count);
    it += 3 * layout.joint_count;
    f.velocities.assign(it, it + 3 * layout.joint_count);
    it += 3 * layout.joint_count;
    f.rotations6d.assign(it, it + layout.rotations_size());
    it += layout.rotations_size();
    f.contacts.assign(it, it + 4);
    return f;
}

Tensor compute_velocities(const Tensor& positions_per_frame, double fps) {
    const int n = positions_per_frame.rows;
    const int d = positions_per_frame.cols;
    Tensor vel(n, d);
    if (n < 2) return vel;  // single frame: zero velocities
    for (int t = 0; t + 1 < n; ++t)
        for (int j = 0; j < d; ++j)
            vel.at(t, j) = (positions_per_frame.at(t + 1, j) - positions_per_frame.at(t, j)) * fps;
    std::memcpy(vel.row(n - 1), vel.row(n - 2), sizeof(double) * d);
    return vel;
}

Tensor detect_foot_contacts(const Tensor& positions_per_frame, double fps,
                            const Skeleton& skeleton, double speed_threshold,
                            double height_threshold) {
    require(positions_per_frame.cols == 3 * skeleton.joint_count,
            "detect_foot_contacts: positions width does not match skeleton");
    const Tensor vel = compute_velocities(positions_per_frame, fps);
    const int n = positions_per_frame.rows;
    Tensor contacts(n, 4);
    for (int t = 0; t < n; ++t) {
        for (int c = 0; c < 4; ++c) {
            const int j = skeleton.foot_joints[static_cast<size_t>(c)];
            const double* v = vel.row(t) + 3 * j;
            const double speed = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            const double height = positions_per_frame.at(t, 3 * j + 1);  // y up
            contacts.at(t, c) = (speed < speed_threshold && height < height_threshold) ? 1.0 : 0.0;
        }
    }
    return contacts;
}

DuetSequence to_relative_frame(const DuetSequence& duet, const MotionLayout& layout) {
    require(duet.frames_a.rows == duet.frames_b.rows,
            "to_relative_frame: persons have different frame counts");
    DuetSequence out = duet;
    if (duet.n_frames() == 0) return out;
    const double* root = duet.frames_a.row(0) + layout.positions_offset();
    const double ox = root[0], oy = root[1], oz = root[2];
    for (Tensor* frames : {&out.frames_a, &out.frames_b}) {
        for (int t = 0; t < frames->rows; ++t) {
            double* p = frames->row(t) + layout.positions_offset();
            for (int j = 0; j < layout.joint_count; ++j) {
                p[3 * j + 0] -= ox;
                p[3 * j + 1] -= oy;
                p[3 * j + 2] -= oz;
            }
        }
    }
    return out;
}

std::array<double, 6> rotation_to_6d(const std::array<double, 9>& m) {
    // columns 0 and 1 of the row-major matrix
    return {m[0], m[3], m[6], m[1], m[4], m[7]};
}

std::array<double, 9> rotation_from_6d(const std::array<double, 6>& r6) {
    double a[3] = {r6[0], r6[1], r6[2]};
    double b[3] = {r6[3], r6[4], r6[5]};
    double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    require(na > 1e-12, "rotation_from_6d: first column is degenerate");
    for (double& x : a) x /= na;
    const double ab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    for (int i = 0; i < 3; ++i) b[i] -= ab * a[i];
    double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    require(nb > 1e-12, "rotation_from_6d: columns are colinear");
    for (double& x : b) x /= nb;
    const double c[3] = {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                         a[0] * b[1] - a[1] * b[0]};
    return {a[0], b[0], c[0], a[1], b[1], c[1], a[2], b[2], c[2]};
}

Tensor bone_lengths_from_positions(const Tensor& frames, const MotionLayout& layout,
                                   const Skeleton& skeleton) {
    require(frames.cols == layout.frame_dim() || frames.cols == 3 * layout.joint_count,
            "bone_lengths_from_positions: unexpected row width");
    const int jc = layout.joint_count;
    Tensor out(frames.rows, jc - 1);
    for (int t = 0; t < frames.rows; ++t) {
        const double* p = frames.row(t);  // positions are the leading channels
        for (int j = 1; j < jc; ++j) {
            const int par = skeleton.parent_index[j];
            const double dx = p[3 * j] - p[3 * par];
            const double dy = p[3 * j + 1] - p[3 * par + 1];
            const double dz = p[3 * j + 2] - p[3 * par + 2];
            out.at(t, j - 1) = std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    }
    return out;
}

}  // namespace dualflow
