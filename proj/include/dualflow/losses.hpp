// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualflow/autograd.hpp"
#include "dualflow/motion.hpp"

namespace dualflow {

// All loss coefficients. The inner weights follow the published defaults; the
// top-level geometric/interaction weights default to 1.
struct LossWeights {
    double lambda_triplet = 0.1;
    double margin = 0.5;
    double lambda_vel = 30.0;
    double lambda_foot = 30.0;
    double lambda_bl = 10.0;
    double lambda_dm = 3.0;
    double lambda_ro = 0.01;
    double lambda_sync = 5.0;
    double lambda_geo = 1.0;
    double lambda_inter = 1.0;
    double tau = 1.0;
    double end_effector_weight = 2.0;
    double contact_radius = 1.0;

    void validate() const;
};

// Linear-path interpolation state: x_t = (1 - t) x0 + t eps, v_t = eps - x0.
struct FlowSample {
    Tensor x0;
    Tensor eps;
    double t = 0.0;
    Tensor x_t;
    Tensor v_t;
};

FlowSample interpolate(const Tensor& x0, const Tensor& eps, double t);

// Mean squared error over all elements.
Var flow_loss(Var v_pred, const Tensor& v_target);

// Cosine-distance triplet with margin over the flattened sequences. A
// zero-norm operand makes that distance exactly 1 (orthogonal convention);
// zero_norm_hit reports it so callers can log the event.
Var triplet_loss(Var v_hat, Var v_plus, Var v_minus, double margin,
                 bool* zero_norm_hit = nullptr);

Var crf_loss(Var flow_term, Var triplet_term, double lambda_triplet);

// Inversion of the linear path: x0_hat = x_t - t * v_pred.
Var predicted_clean(const Tensor& x_t, Var v_pred, double t);

// Velocity/foot-contact/bone-length regularizers on the recovered clean
// motion. Accepts one person [T x 262] or a duet [T x 524] (persons averaged).
// Ground-truth contacts gate the foot term.
struct GeometricTerms {
    Var foot;
    Var vel;
    Var bone_length;
};

GeometricTerms geometric_terms(Var x0_hat, const Tensor& gt, const Skeleton& skeleton);

Var geometric_loss(Var x0_hat, const Tensor& gt, const Skeleton& skeleton,
                   const LossWeights& weights);

// Cross-person synchronization: distance-weighted, joint-weighted squared
// error between predicted and ground-truth pairwise joint distances,
// averaged over frames and pairs. Inputs are duets [T x 524].
Var sync_loss(Var pred_duet, const Tensor& gt_duet, const Skeleton& skeleton, double tau,
              double end_effector_weight);

// Distance-map + relative-orientation + synchronization interaction terms.
struct InteractionTerms {
    Var distance_map;
    Var relative_orientation;
    Var sync;
};

InteractionTerms interaction_terms(Var pred_duet, const Tensor& gt_duet,
                                   const Skeleton& skeleton, const LossWeights& weights);

Var interaction_loss(Var pred_duet, const Tensor& gt_duet, const Skeleton& skeleton,
                     const LossWeights& weights);

Var total_loss(Var crf, Var geo, Var inter, double lambda_geo, double lambda_inter);

// --- differentiable geometry pieces (exposed for tests) ----------------------
// Per-frame bone lengths from packed motion rows (positions lead the row).
Var bone_lengths_op(Var frames, const Skeleton& skeleton);
// Cross-person pairwise joint distances: [T x (J*J)], index j1 * J + j2.
Var cross_distances_op(Var pos_a, Var pos_b, int joints);
// Relative root yaw between persons from the hip lattice: [T x 1].
Var relative_yaw_op(Var pos_a, Var pos_b, int left_hip, int right_hip);
// Wrap angles to (-pi, pi]; gradient is the identity away from the seam.
Var wrap_angle(Var a);

}  // namespace dualflow
