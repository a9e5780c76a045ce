// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/losses.hpp"

#include <cmath>

#include "dualflow/kernels.hpp"

namespace dualflow {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDistEps = 1e-12;

Tensor negate(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data) v = -v;
    return out;
}
}  // namespace

void LossWeights::validate() const {
    for (double v : {lambda_triplet, margin, lambda_vel, lambda_foot, lambda_bl, lambda_dm,
                     lambda_ro, lambda_sync, lambda_geo, lambda_inter, tau, end_effector_weight,
                     contact_radius})
        require(v >= 0.0, "loss weights must be non-negative");
}

FlowSample interpolate(const Tensor& x0, const Tensor& eps, double t) {
    require(x0.same_shape(eps), "interpolate: x0 and eps must share a shape");
    require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0, 1], got " + std::to_string(t));
    FlowSample s;
    s.x0 = x0;
    s.eps = eps;
    s.t = t;
    s.x_t = Tensor(x0.rows, x0.cols);
    s.v_t = Tensor(x0.rows, x0.cols);
    for (size_t i = 0; i < x0.size(); ++i) {
        s.x_t.data[i] = (1.0 - t) * x0.data[i] + t * eps.data[i];
        s.v_t.data[i] = eps.data[i] - x0.data[i];
    }
    return s;
}

Var flow_loss(Var v_pred, const Tensor& v_target) {
    require(v_pred.val().same_shape(v_target), "flow_loss: shape mismatch");
    Var diff = add_const(v_pred, negate(v_target));
    return mean_all(mul(diff, diff));
}

Var triplet_loss(Var v_hat, Var v_plus, Var v_minus, double margin, bool* zero_norm_hit) {
    bool hit_p = false, hit_m = false;
    Var cos_p = cosine_sim_flat(v_hat, v_plus, &hit_p);
    Var cos_m = cosine_sim_flat(v_hat, v_minus, &hit_m);
    if (zero_norm_hit) *zero_norm_hit = hit_p || hit_m;
    // d = 1 - cos; d_plus - d_minus + margin = cos_m - cos_p + margin
    Var inner = add_const(sub(cos_m, cos_p), Tensor::scalar(margin));
    return relu(inner);
}

Var crf_loss(Var flow_term, Var triplet_term, double lambda_triplet) {
    return add(flow_term, scale(triplet_term, lambda_triplet));
}

Var predicted_clean(const Tensor& x_t, Var v_pred, double t) {
    require(x_t.same_shape(v_pred.val()), "predicted_clean: shape mismatch");
    require(t >= 0.0 && t <= 1.0, "predicted_clean: t must lie in [0, 1]");
    return add_const(scale(v_pred, -t), x_t);
}

// ---------------------------------------------------------------------------
// differentiable geometry
// ---------------------------------------------------------------------------

Var bone_lengths_op(Var frames, const Skeleton& skeleton) {
    const int jc = skeleton.joint_count;
    require(frames.cols() >= 3 * jc, "bone_lengths_op: row width too small for skeleton");
    const int t_len = frames.rows();
    Tensor out(t_len, jc - 1);
    const Tensor& f = frames.val();
    for (int t = 0; t < t_len; ++t)
        for (int j = 1; j < jc; ++j) {
            const int par = skeleton.parent_index[static_cast<size_t>(j)];
            const double dx = f.at(t, 3 * j) - f.at(t, 3 * par);
            const double dy = f.at(t, 3 * j + 1) - f.at(t, 3 * par + 1);
            const double dz = f.at(t, 3 * j + 2) - f.at(t, 3 * par + 2);
            out.at(t, j - 1) = std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    const int ifr = frames.idx;
    auto parents = std::make_shared<std::vector<int>>(skeleton.parent_index);
    return frames.tape->make(std::move(out), requires_any({frames}),
                             [ifr, parents, jc](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!t.node(ifr).requires_grad) return;
        const Tensor& lengths = t.node(self).val();
        const Tensor& f2 = t.node(ifr).val();
        Tensor& df = t.grad_of(ifr);
        for (int ti = 0; ti < g.rows; ++ti)
            for (int j = 1; j < jc; ++j) {
                const double len = lengths.at(ti, j - 1);
                if (len <= kDistEps) continue;
                const double gj = g.at(ti, j - 1) / len;
                const int par = (*parents)[static_cast<size_t>(j)];
                for (int c = 0; c < 3; ++c) {
                    const double u = gj * (f2.at(ti, 3 * j + c) - f2.at(ti, 3 * par + c));
                    df.at(ti, 3 * j + c) += u;
                    df.at(ti, 3 * par + c) -= u;
                }
            }
    });
}

Var cross_distances_op(Var pos_a, Var pos_b, int joints) {
    require(pos_a.cols() == 3 * joints && pos_b.cols() == 3 * joints,
            "cross_distances_op: positions width mismatch");
    require(pos_a.rows() == pos_b.rows(), "cross_distances_op: frame count mismatch");
    const int t_len = pos_a.rows();
    Tensor out(t_len, joints * joints);
    kernels::pairwise_cross_distances(pos_a.val().data.data(), pos_b.val().data.data(),
                                      out.data.data(), t_len, joints);
    const int ia = pos_a.idx, ib = pos_b.idx;
    return pos_a.tape->make(std::move(out), requires_any({pos_a, pos_b}),
                            [ia, ib, joints](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const bool need_a = t.node(ia).requires_grad;
        const bool need_b = t.node(ib).requires_grad;
        if (!need_a && !need_b) return;
        const Tensor& dists = t.node(self).val();
        const Tensor& pa = t.node(ia).val();
        const Tensor& pb = t.node(ib).val();
        Tensor* da = need_a ? &t.grad_of(ia) : nullptr;
        Tensor* db = need_b ? &t.grad_of(ib) : nullptr;
        for (int ti = 0; ti < g.rows; ++ti)
            for (int j1 = 0; j1 < joints; ++j1)
                for (int j2 = 0; j2 < joints; ++j2) {
                    const double d = dists.at(ti, j1 * joints + j2);
                    if (d <= kDistEps) continue;
                    const double gd = g.at(ti, j1 * joints + j2) / d;
                    if (gd == 0.0) continue;
                    for (int c = 0; c < 3; ++c) {
                        const double u = gd * (pa.at(ti, 3 * j1 + c) - pb.at(ti, 3 * j2 + c));
                        if (da) da->at(ti, 3 * j1 + c) += u;
                        if (db) db->at(ti, 3 * j2 + c) -= u;
                    }
                }
    });
}

namespace {

double hip_yaw(const double* row, int left_hip, int right_hip) {
    const double vx = row[3 * left_hip] - row[3 * right_hip];
    const double vz = row[3 * left_hip + 2] - row[3 * right_hip + 2];
    return std::atan2(vx, vz);
}

}  // namespace

Var relative_yaw_op(Var pos_a, Var pos_b, int left_hip, int right_hip) {
    require(pos_a.rows() == pos_b.rows(), "relative_yaw_op: frame count mismatch");
    const int t_len = pos_a.rows();
    Tensor out(t_len, 1);
    for (int t = 0; t < t_len; ++t)
        out.at(t, 0) = hip_yaw(pos_a.val().row(t), left_hip, right_hip) -
                       hip_yaw(pos_b.val().row(t), left_hip, right_hip);
    const int ia = pos_a.idx, ib = pos_b.idx;
    return pos_a.tape->make(std::move(out), requires_any({pos_a, pos_b}),
                            [ia, ib, left_hip, right_hip](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        for (int which = 0; which < 2; ++which) {
            const int idx = which == 0 ? ia : ib;
            if (!t.node(idx).requires_grad) continue;
            const double sign = which == 0 ? 1.0 : -1.0;
            const Tensor& p = t.node(idx).val();
            Tensor& dp = t.grad_of(idx);
            for (int ti = 0; ti < g.rows; ++ti) {
                const double vx = p.at(ti, 3 * left_hip) - p.at(ti, 3 * right_hip);
                const double vz = p.at(ti, 3 * left_hip + 2) - p.at(ti, 3 * right_hip + 2);
                const double den = vx * vx + vz * vz;
                if (den <= kDistEps) continue;
                const double gd = sign * g.at(ti, 0);
                // d atan2(vx, vz) = (vz, -vx) / (vx^2 + vz^2)
                dp.at(ti, 3 * left_hip) += gd * vz / den;
                dp.at(ti, 3 * right_hip) -= gd * vz / den;
                dp.at(ti, 3 * left_hip + 2) -= gd * vx / den;
                dp.at(ti, 3 * right_hip + 2) += gd * vx / den;
            }
        }
    });
}

Var wrap_angle(Var a) {
    Tensor out = a.val();
    for (auto& v : out.data) {
        v = v - 2.0 * kPi * std::floor((v + kPi) / (2.0 * kPi));
    }
    const int ia = a.idx;
    return a.tape->make(std::move(out), requires_any({a}), [ia](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!t.node(ia).requires_grad) return;
        kernels::axpy(1.0, g.data.data(), t.grad_of(ia).data.data(), g.size());
    });
}

// ---------------------------------------------------------------------------
// regularization losses
// ---------------------------------------------------------------------------

namespace {

Var l1_to_const(Var pred, const Tensor& target) {
    return mean_all(abs_val(add_const(pred, negate(target))));
}

// foot channel mask from ground-truth contacts: [T x 12], contact column c
// gates the three velocity components of foot joint c
Tensor foot_mask(const Tensor& gt_person, const MotionLayout& layout) {
    Tensor mask(gt_person.rows, 12);
    for (int t = 0; t < gt_person.rows; ++t)
        for (int c = 0; c < 4; ++c) {
            const double contact = gt_person.at(t, layout.contacts_offset() + c);
            for (int k = 0; k < 3; ++k) mask.at(t, 3 * c + k) = contact;
        }
    return mask;
}

GeometricTerms geometric_terms_person(Var x0_hat, const Tensor& gt,
                                      const Skeleton& skeleton) {
    const MotionLayout layout{skeleton.joint_count};
    require(x0_hat.cols() == layout.frame_dim(), "geometric_loss: frame width mismatch");

    // velocity channels, L1 against ground truth
    Var vel_pred = slice_cols(x0_hat, layout.velocities_offset(), layout.rotations_offset());
    Tensor vel_gt(gt.rows, 3 * layout.joint_count);
    for (int t = 0; t < gt.rows; ++t)
        for (int j = 0; j < vel_gt.cols; ++j)
            vel_gt.at(t, j) = gt.at(t, layout.velocities_offset() + j);
    Var l_vel = l1_to_const(vel_pred, vel_gt);

    // foot-contact term: predicted foot velocity magnitudes where the ground
    // truth says the foot is planted
    std::vector<Var> foot_slices;
    for (int c = 0; c < 4; ++c) {
        const int j = skeleton.foot_joints[static_cast<size_t>(c)];
        const int off = layout.velocities_offset() + 3 * j;
        foot_slices.push_back(slice_cols(x0_hat, off, off + 3));
    }
    Var foot_vel = concat_cols(foot_slices);
    Var l_foot = mean_all(mul_const(abs_val(foot_vel), foot_mask(gt, layout)));

    // bone lengths from predicted positions against the skeleton template
    Var lengths = bone_lengths_op(x0_hat, skeleton);
    Tensor target(lengths.rows(), lengths.cols());
    for (int t = 0; t < target.rows; ++t)
        for (int j = 1; j < skeleton.joint_count; ++j)
            target.at(t, j - 1) = skeleton.bone_lengths[static_cast<size_t>(j)];
    Var l_bl = l1_to_const(lengths, target);

    return GeometricTerms{l_foot, l_vel, l_bl};
}

}  // namespace

GeometricTerms geometric_terms(Var x0_hat, const Tensor& gt, const Skeleton& skeleton) {
    require(x0_hat.val().same_shape(gt), "geometric_loss: prediction/ground-truth shape mismatch");
    const MotionLayout layout{skeleton.joint_count};
    const int fd = layout.frame_dim();
    if (x0_hat.cols() == fd) return geometric_terms_person(x0_hat, gt, skeleton);
    require(x0_hat.cols() == 2 * fd, "geometric_loss: expected one person or a duet row width");
    Tensor gt_a(gt.rows, fd), gt_b(gt.rows, fd);
    for (int t = 0; t < gt.rows; ++t)
        for (int j = 0; j < fd; ++j) {
            gt_a.at(t, j) = gt.at(t, j);
            gt_b.at(t, j) = gt.at(t, fd + j);
        }
    const GeometricTerms a =
        geometric_terms_person(slice_cols(x0_hat, 0, fd), gt_a, skeleton);
    const GeometricTerms b =
        geometric_terms_person(slice_cols(x0_hat, fd, 2 * fd), gt_b, skeleton);
    return GeometricTerms{scale(add(a.foot, b.foot), 0.5), scale(add(a.vel, b.vel), 0.5),
                          scale(add(a.bone_length, b.bone_length), 0.5)};
}

Var geometric_loss(Var x0_hat, const Tensor& gt, const Skeleton& skeleton,
                   const LossWeights& weights) {
    const GeometricTerms t = geometric_terms(x0_hat, gt, skeleton);
    return add(add(scale(t.foot, weights.lambda_foot), scale(t.vel, weights.lambda_vel)),
               scale(t.bone_length, weights.lambda_bl));
}

Var sync_loss(Var pred_duet, const Tensor& gt_duet, const Skeleton& skeleton, double tau,
              double end_effector_weight) {
    const MotionLayout layout{skeleton.joint_count};
    const int fd = layout.frame_dim();
    const int jc = skeleton.joint_count;
    require(pred_duet.cols() == 2 * fd && gt_duet.cols == 2 * fd,
            "sync_loss: expected duet rows of width " + std::to_string(2 * fd));
    require(pred_duet.rows() == gt_duet.rows, "sync_loss: frame count mismatch");
    require(tau > 0, "sync_loss: tau must be positive");

    Var pos_a = slice_cols(pred_duet, 0, 3 * jc);
    Var pos_b = slice_cols(pred_duet, fd, fd + 3 * jc);
    Var d_pred = cross_distances_op(pos_a, pos_b, jc);

    // ground-truth distances and their weights
    const int t_len = gt_duet.rows;
    Tensor gt_a(t_len, 3 * jc), gt_b(t_len, 3 * jc);
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < 3 * jc; ++j) {
            gt_a.at(t, j) = gt_duet.at(t, j);
            gt_b.at(t, j) = gt_duet.at(t, fd + j);
        }
    Tensor d_gt(t_len, jc * jc);
    kernels::pairwise_cross_distances(gt_a.data.data(), gt_b.data.data(), d_gt.data.data(), t_len,
                                      jc);

    std::vector<double> joint_w(static_cast<size_t>(jc), 1.0);
    for (int e : skeleton.end_effector_set) joint_w[static_cast<size_t>(e)] = end_effector_weight;
    Tensor w(t_len, jc * jc);
    for (int t = 0; t < t_len; ++t)
        for (int j1 = 0; j1 < jc; ++j1)
            for (int j2 = 0; j2 < jc; ++j2)
                w.at(t, j1 * jc + j2) = std::exp(-d_gt.at(t, j1 * jc + j2) / tau) *
                                        joint_w[static_cast<size_t>(j1)] *
                                        joint_w[static_cast<size_t>(j2)];

    Var diff = add_const(d_pred, negate(d_gt));
    return mean_all(mul_const(mul(diff, diff), w));
}

InteractionTerms interaction_terms(Var pred_duet, const Tensor& gt_duet,
                                   const Skeleton& skeleton, const LossWeights& weights) {
    const MotionLayout layout{skeleton.joint_count};
    const int fd = layout.frame_dim();
    const int jc = skeleton.joint_count;
    require(pred_duet.cols() == 2 * fd && gt_duet.cols == 2 * fd,
            "interaction_loss: expected duet rows");

    Var pos_a = slice_cols(pred_duet, 0, 3 * jc);
    Var pos_b = slice_cols(pred_duet, fd, fd + 3 * jc);

    const int t_len = gt_duet.rows;
    Tensor gt_a(t_len, 3 * jc), gt_b(t_len, 3 * jc);
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < 3 * jc; ++j) {
            gt_a.at(t, j) = gt_duet.at(t, j);
            gt_b.at(t, j) = gt_duet.at(t, fd + j);
        }
    Tensor d_gt(t_len, jc * jc);
    kernels::pairwise_cross_distances(gt_a.data.data(), gt_b.data.data(), d_gt.data.data(), t_len,
                                      jc);

    // distance map on pairs in contact range (by ground truth)
    Tensor mask(t_len, jc * jc);
    double count = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        mask.data[i] = d_gt.data[i] < weights.contact_radius ? 1.0 : 0.0;
        count += mask.data[i];
    }
    Var d_pred = cross_distances_op(pos_a, pos_b, jc);
    Var masked = mul_const(abs_val(add_const(d_pred, negate(d_gt))), mask);
    Var l_dm = scale(sum_all(masked), 1.0 / std::max(1.0, count));

    // relative root yaw
    const int lh = 1, rh = 2;  // hip joints flank the root
    Var rel_pred = relative_yaw_op(pos_a, pos_b, lh, rh);
    Tensor rel_gt(t_len, 1);
    for (int t = 0; t < t_len; ++t) {
        auto yaw = [&](const Tensor& p) {
            const double vx = p.at(t, 3 * lh) - p.at(t, 3 * rh);
            const double vz = p.at(t, 3 * lh + 2) - p.at(t, 3 * rh + 2);
            return std::atan2(vx, vz);
        };
        rel_gt.at(t, 0) = yaw(gt_a) - yaw(gt_b);
    }
    Var yaw_err = wrap_angle(add_const(rel_pred, negate(rel_gt)));
    Var l_ro = mean_all(mul(yaw_err, yaw_err));

    Var l_sync = sync_loss(pred_duet, gt_duet, skeleton, weights.tau, weights.end_effector_weight);

    return InteractionTerms{l_dm, l_ro, l_sync};
}

Var interaction_loss(Var pred_duet, const Tensor& gt_duet, const Skeleton& skeleton,
                     const LossWeights& weights) {
    const InteractionTerms t = interaction_terms(pred_duet, gt_duet, skeleton, weights);
    return add(add(scale(t.distance_map, weights.lambda_dm),
                   scale(t.relative_orientation, weights.lambda_ro)),
               scale(t.sync, weights.lambda_sync));
}

Var total_loss(Var crf, Var geo, Var inter, double lambda_geo, double lambda_inter) {
    return add(crf, add(scale(geo, lambda_geo), scale(inter, lambda_inter)));
}

}  // namespace dualflow
