// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "dualflow/model.hpp"

using namespace dualflow;

namespace {

// Small rig: model + encoders sharing one parameter store.
struct Rig {
    ModelConfig mc;
    EncoderConfig ec;
    ParamStore store;
    std::unique_ptr<ConditioningEncoders> enc;
    std::unique_ptr<DualFlowModel> model;

    explicit Rig(int n_blocks = 2, int latent = 32, std::vector<int> kernels = {3, 5},
                 int look_ahead = 2, int heads = 4) {
        mc.n_blocks = n_blocks;
        mc.latent_dim = latent;
        mc.n_heads = heads;
        mc.ffn_dim = 2 * latent;
        mc.dropout = 0.0;
        mc.conv_kernels = std::move(kernels);
        mc.look_ahead = look_ahead;
        ec.latent_dim = latent;
        ec.text_embed_dim = latent;
        ec.music_dim = 8;
        ec.n_heads = heads;
        Rng rng(505);
        enc = std::make_unique<ConditioningEncoders>(ec, store, rng);
        model = std::make_unique<DualFlowModel>(mc, store, rng);
    }

    void randomize_all(uint64_t seed, double stddev = 0.05) {
        Rng rng(seed);
        for (const auto& p : store.all())
            for (auto& v : p->value.data) v = stddev * rng.normal();
    }

    void zero_params_matching(const std::string& suffix) {
        for (const auto& p : store.all())
            if (p->name.size() >= suffix.size() &&
                p->name.compare(p->name.size() - suffix.size(), suffix.size(), suffix) == 0)
                p->value.fill(0.0);
    }

    ConditioningBundle bundle(Tape& tape, int frames, const Tensor& music,
                              const std::vector<Exemplar>& ex = {}) const {
        return enc->build_bundle(tape, "a waltz duet in closed hold", 0.4, &music, frames, ex,
                                 DropFlags{});
    }
};

std::shared_ptr<DuetSequence> dummy_motion(int frames, uint64_t seed) {
    Rng rng(seed);
    auto m = std::make_shared<DuetSequence>();
    m->fps = 30.0;
    m->frames_a = Tensor::randn(frames, 262, rng);
    m->frames_b = Tensor::randn(frames, 262, rng);
    return m;
}

}  // namespace

TEST_CASE("causal mask matches the j <= i + L rule") {
    {
        const MaskPtr m = build_causal_mask(2, 2, 0);
        CHECK(*m == std::vector<uint8_t>{1, 0, 1, 1});
    }
    {
        const MaskPtr m = build_causal_mask(3, 3, 1);
        CHECK(*m == std::vector<uint8_t>{1, 1, 0, 1, 1, 1, 1, 1, 1});
    }
    // exhaustive enumeration for all T, L <= 16
    for (int tq = 1; tq <= 16; ++tq)
        for (int tk = 1; tk <= 16; ++tk)
            for (int L = 0; L <= 16; ++L) {
                const MaskPtr m = build_causal_mask(tq, tk, L);
                for (int i = 0; i < tq; ++i)
                    for (int j = 0; j < tk; ++j)
                        CHECK((*m)[static_cast<size_t>(i) * tk + j] == (j <= i + L ? 1 : 0));
                if (L >= tk - 1)
                    for (uint8_t v : *m) CHECK(v == 1);  // full attention limit
            }
}

TEST_CASE("config validation rejects bad shapes") {
    ModelConfig mc;
    mc.latent_dim = 64;
    mc.n_heads = 3;
    CHECK_THROWS_AS(mc.validate(), ValidationError);
    mc.n_heads = 4;
    mc.conv_kernels = {4};
    CHECK_THROWS_AS(mc.validate(), ValidationError);
    mc.conv_kernels = {7};
    mc.look_ahead = -1;
    CHECK_THROWS_AS(mc.validate(), ValidationError);
}

TEST_CASE("multiscale conv: zero gates give exact identity, length preserved") {
    Rig rig(1, 32, {3, 7, 11});
    rig.randomize_all(7);
    // gates back to zero
    rig.zero_params_matching(".conv.gates");
    Tape tape;
    Rng rng(3);
    Var z = tape.constant(Tensor::randn(20, 32, rng));
    Var out = rig.model->multiscale_conv_forward(tape, z, 0, false);
    CHECK(out.rows() == 20);
    CHECK(max_abs_diff(out.val(), z.val()) == 0.0);
}

TEST_CASE("multiscale conv: identity kernel-1 weights with unit gate give z + GELU(z)") {
    Rig rig(1, 2, {1}, 2, /*heads=*/1);
    // identity conv: w[co][ci] = I, bias 0, gate 1
    Parameter& w = rig.store.at("blk0.a.conv.k1.w");
    w.value.fill(0.0);
    w.value.at(0, 0) = 1.0;
    w.value.at(1, 1) = 1.0;
    rig.store.at("blk0.a.conv.gates").value.fill(1.0);

    Tape tape;
    Tensor zt(2, 2);
    zt.at(0, 0) = 0.5;
    zt.at(0, 1) = -1.25;
    zt.at(1, 0) = 2.0;
    zt.at(1, 1) = 0.0;
    Var z = tape.constant(zt);
    Var out = rig.model->multiscale_conv_forward(tape, z, 0, false);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double x = zt.at(i, j);
            const double expect = x + 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
            CHECK(out.val().at(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("conditioned_norm: zero-init path is plain normalization") {
    ParamStore store;
    CondNormSite site = make_cond_norm_site(store, "norm", 4);
    Tape tape;
    Rng rng(4);
    Var z = tape.leaf(Tensor::randn(3, 4, rng), false);
    Var z_d = tape.leaf(Tensor::randn(1, 4, rng), false);
    Var out = conditioned_norm(tape, z, z_d, site);
    for (int i = 0; i < 3; ++i) {
        double mean = 0, var = 0;
        for (int j = 0; j < 4; ++j) mean += out.val().at(i, j);
        mean /= 4;
        for (int j = 0; j < 4; ++j) var += (out.val().at(i, j) - mean) * (out.val().at(i, j) - mean);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var / 4 == doctest::Approx(1.0).epsilon(1e-4));
    }

    // a constant feature row normalizes to zero, then picks up the shift
    store.at("norm.bshift").value.fill(0.75);
    Tape tape2;
    Var zc = tape2.leaf(Tensor::full(1, 4, 5.0), false);
    Var out2 = conditioned_norm(tape2, zc, tape2.leaf(Tensor::zeros(1, 4), false), site);
    for (int j = 0; j < 4; ++j) CHECK(out2.val().at(0, j) == doctest::Approx(0.75).epsilon(1e-9));

    // row mean equals the conditioned shift mean when scale stays 1
    store.at("norm.bshift").value.at(0, 0) = 0.2;
    store.at("norm.bshift").value.at(0, 1) = -0.4;
    store.at("norm.bshift").value.at(0, 2) = 1.0;
    store.at("norm.bshift").value.at(0, 3) = 0.0;
    Tape tape3;
    Var z3 = tape3.leaf(Tensor::randn(5, 4, rng), false);
    Var out3 = conditioned_norm(tape3, z3, tape3.leaf(Tensor::zeros(1, 4), false), site);
    const double shift_mean = (0.2 - 0.4 + 1.0 + 0.0) / 4.0;
    for (int i = 0; i < 5; ++i) {
        double mean = 0;
        for (int j = 0; j < 4; ++j) mean += out3.val().at(i, j);
        CHECK(mean / 4 == doctest::Approx(shift_mean).epsilon(1e-5));
    }
}

TEST_CASE("attention: degenerate single key, mask neutrality, hand-computed weights") {
    ParamStore store;
    Rng rng(8);
    AttentionSite site = make_attention_site(store, "att", 2, rng, 0.3);

    // single key: output = v * wo regardless of the query
    {
        Tape tape;
        Tensor kv(1, 2);
        kv.at(0, 0) = 0.7;
        kv.at(0, 1) = -0.2;
        Var kvv = tape.leaf(kv, false);
        Var q1 = tape.leaf(Tensor::full(3, 2, 0.1), false);
        Var q2 = tape.leaf(Tensor::full(3, 2, -9.0), false);
        Var o1 = multihead_attention(tape, q1, kvv, site, 1, nullptr, 0.0, nullptr);
        Var o2 = multihead_attention(tape, q2, kvv, site, 1, nullptr, 0.0, nullptr);
        CHECK(max_abs_diff(o1.val(), o2.val()) == 0.0);
    }

    // no mask vs all-ones mask: identical outputs
    {
        Tape tape;
        Var q = tape.leaf(Tensor::randn(4, 2, rng), false);
        Var kv = tape.leaf(Tensor::randn(5, 2, rng), false);
        auto ones = std::make_shared<std::vector<uint8_t>>(20, uint8_t{1});
        Var o1 = multihead_attention(tape, q, kv, site, 1, nullptr, 0.0, nullptr);
        Var o2 = multihead_attention(tape, q, kv, site, 1, ones, 0.0, nullptr);
        CHECK(max_abs_diff(o1.val(), o2.val()) == 0.0);
    }

    // 2 queries x 3 keys against a from-scratch softmax evaluation
    {
        Tape tape;
        Var q_in = tape.leaf(Tensor::randn(2, 2, rng), false);
        Var kv_in = tape.leaf(Tensor::randn(3, 2, rng), false);
        Var out = multihead_attention(tape, q_in, kv_in, site, 1, nullptr, 0.0, nullptr);

        const Tensor& wq = store.at("att.wq").value;
        const Tensor& wk = store.at("att.wk").value;
        const Tensor& wv = store.at("att.wv").value;
        const Tensor& wo = store.at("att.wo").value;
        auto matref = [](const Tensor& x, const Tensor& w) {
            Tensor y(x.rows, w.cols);
            for (int i = 0; i < x.rows; ++i)
                for (int j = 0; j < w.cols; ++j)
                    for (int k = 0; k < x.cols; ++k) y.at(i, j) += x.at(i, k) * w.at(k, j);
            return y;
        };
        const Tensor q = matref(q_in.val(), wq), k = matref(kv_in.val(), wk),
                     v = matref(kv_in.val(), wv);
        Tensor expected(2, 2);
        for (int i = 0; i < 2; ++i) {
            double w[3], z = 0;
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int d = 0; d < 2; ++d) s += q.at(i, d) * k.at(j, d);
                w[j] = std::exp(s / std::sqrt(2.0));
                z += w[j];
            }
            Tensor mixed(1, 2);
            for (int j = 0; j < 3; ++j)
                for (int d = 0; d < 2; ++d) mixed.at(0, d) += w[j] / z * v.at(j, d);
            for (int d = 0; d < 2; ++d) expected.at(i, d) = mixed.at(0, d);
        }
        const Tensor got_pre_wo = expected;  // expected output before wo
        const Tensor final_expected = matref(got_pre_wo, wo);
        CHECK(max_abs_diff(out.val(), final_expected) < 1e-6);
    }
}

TEST_CASE("block with zeroed output projections is a pure residual identity") {
    Rig rig(2, 32);
    rig.randomize_all(11);
    rig.zero_params_matching(".wo");
    rig.zero_params_matching(".ffn.w2");
    rig.zero_params_matching(".ffn.b2");
    rig.zero_params_matching(".conv.gates");

    Tape tape;
    Rng rng(12);
    Tensor music = Tensor::randn(10, 8, rng);
    const ConditioningBundle bundle = rig.bundle(tape, 10, music);
    BlockState state{tape.constant(Tensor::randn(10, 32, rng)),
                     tape.constant(Tensor::randn(10, 32, rng))};
    BlockState out =
        rig.model->block_forward(tape, 0, state, bundle, TaskMode::Interactive, Var{});
    CHECK(max_abs_diff(out.z_a.val(), state.z_a.val()) == 0.0);
    CHECK(max_abs_diff(out.z_b.val(), state.z_b.val()) == 0.0);
}

TEST_CASE("model with zeroed projections reduces to in->out projection, any depth") {
    for (int blocks : {1, 3}) {
        Rig rig(blocks, 32);
        rig.randomize_all(21);
        rig.zero_params_matching(".wo");
        rig.zero_params_matching(".ffn.w2");
        rig.zero_params_matching(".ffn.b2");
        rig.zero_params_matching(".conv.gates");

        Tape tape;
        Rng rng(22);
        Tensor x_a = Tensor::randn(6, 262, rng), x_b = Tensor::randn(6, 262, rng);
        Tensor music = Tensor::randn(6, 8, rng);
        const ConditioningBundle bundle = rig.bundle(tape, 6, music);
        auto out = rig.model->forward(tape, x_a, x_b, 0.3, bundle, TaskMode::Interactive);

        // closed form: out_proj(in_proj(x) + positions)
        Var z = tape.constant(x_a);
        Var latent = add_const(
            add_rowvec(matmul(z, tape.param(rig.store.at("proj_in.a.w"))),
                       tape.param(rig.store.at("proj_in.a.b"))),
            sinusoidal_positions(6, 32));
        Var expect = add_rowvec(matmul(latent, tape.param(rig.store.at("proj_out.a.w"))),
                                tape.param(rig.store.at("proj_out.a.b")));
        CHECK(max_abs_diff(out.v_a.val(), expect.val()) == 0.0);
    }
}

TEST_CASE("interactive symmetry: identical inputs and shared weights stay identical") {
    Rig rig(2, 32);
    rig.randomize_all(31);
    // copy branch-a weights into branch-b everywhere
    for (const auto& p : rig.store.all()) {
        const auto pos_blk = p->name.find(".a.");
        if (p->name.rfind("blk", 0) == 0 && pos_blk != std::string::npos) {
            std::string twin = p->name;
            twin.replace(pos_blk, 3, ".b.");
            rig.store.at(twin).value = p->value;
        }
    }
    rig.store.at("proj_in.b.w").value = rig.store.at("proj_in.a.w").value;
    rig.store.at("proj_in.b.b").value = rig.store.at("proj_in.a.b").value;
    rig.store.at("proj_out.b.w").value = rig.store.at("proj_out.a.w").value;
    rig.store.at("proj_out.b.b").value = rig.store.at("proj_out.a.b").value;

    Tape tape;
    Rng rng(32);
    Tensor x = Tensor::randn(8, 262, rng);
    Tensor music = Tensor::randn(8, 8, rng);
    const ConditioningBundle bundle = rig.bundle(tape, 8, music);
    auto out = rig.model->forward(tape, x, x, 0.6, bundle, TaskMode::Interactive);
    CHECK(max_abs_diff(out.v_a.val(), out.v_b.val()) == 0.0);
}

TEST_CASE("reactive mode: zero actor velocity block and causal invariance") {
    Rig rig(2, 32, {3}, /*look_ahead=*/2);
    rig.randomize_all(41);
    Rng rng(42);
    const int T = 12;
    Tensor x_a = Tensor::randn(T, 262, rng), x_b = Tensor::randn(T, 262, rng);
    Tensor music = Tensor::randn(T, 8, rng);

    Tape tape;
    const ConditioningBundle bundle = rig.bundle(tape, T, music);
    auto out = rig.model->forward(tape, x_a, x_b, 0.5, bundle, TaskMode::Reactive);
    CHECK(out.v_b.rows() == T);
    CHECK(out.v_a.cols() + out.v_b.cols() == 524);
    for (double v : out.v_a.val().data) CHECK(v == 0.0);

    // sublayer probe: perturb the actor latent at a frame beyond i + L and
    // check block output rows at earlier queries are unchanged
    Tape t2;
    const ConditioningBundle b2 = rig.bundle(t2, T, music);
    Var actor = rig.model->encode_actor(t2, x_a);
    BlockState state{actor, t2.constant(Tensor::randn(T, 32, rng))};
    BlockState base = rig.model->block_forward(t2, 0, state, b2, TaskMode::Reactive, actor);

    const int perturbed_frame = 9;
    Tensor actor_pert_t = actor.val();
    for (int j = 0; j < 32; ++j) actor_pert_t.at(perturbed_frame, j) += 10.0;
    Var actor_pert = t2.constant(actor_pert_t);
    BlockState pert =
        rig.model->block_forward(t2, 0, state, b2, TaskMode::Reactive, actor_pert);

    // rows i with i + L < perturbed_frame must be invariant
    for (int i = 0; i + rig.mc.look_ahead < perturbed_frame; ++i)
        for (int j = 0; j < 32; ++j)
            CHECK(std::abs(pert.z_b.val().at(i, j) - base.z_b.val().at(i, j)) < 1e-6);
    // and at least one later row must change (the perturbation is visible)
    double late_diff = 0;
    for (int i = perturbed_frame - rig.mc.look_ahead; i < T; ++i)
        for (int j = 0; j < 32; ++j)
            late_diff = std::max(late_diff,
                                 std::abs(pert.z_b.val().at(i, j) - base.z_b.val().at(i, j)));
    CHECK(late_diff > 1e-9);

    // reactive without an actor latent is rejected
    CHECK_THROWS_AS(
        rig.model->block_forward(t2, 0, state, b2, TaskMode::Reactive, Var{}),
        ValidationError);
}

TEST_CASE("forward determinism with dropout disabled") {
    Rig rig(2, 32);
    rig.randomize_all(51);
    Rng rng(52);
    Tensor x_a = Tensor::randn(6, 262, rng), x_b = Tensor::randn(6, 262, rng);
    Tensor music = Tensor::randn(6, 8, rng);
    std::vector<Exemplar> ex = {{Channel::S, dummy_motion(6, 1)},
                                {Channel::M, dummy_motion(6, 2)}};

    Tape t1;
    auto o1 = rig.model->forward(t1, x_a, x_b, 0.7, rig.bundle(t1, 6, music, ex),
                                 TaskMode::Interactive);
    Tape t2;
    auto o2 = rig.model->forward(t2, x_a, x_b, 0.7, rig.bundle(t2, 6, music, ex),
                                 TaskMode::Interactive);
    CHECK(max_abs_diff(o1.v_a.val(), o2.v_a.val()) == 0.0);
    CHECK(max_abs_diff(o1.v_b.val(), o2.v_b.val()) == 0.0);
}

TEST_CASE("model forward pass gradients match finite differences") {
    Rig rig(2, 32, {3, 5}, 2);
    rig.randomize_all(61);
    Rng rng(62);
    const int T = 8;
    const Tensor x_a = Tensor::randn(T, 262, rng), x_b = Tensor::randn(T, 262, rng);
    const Tensor music = Tensor::randn(T, 8, rng);
    const std::vector<Exemplar> ex = {{Channel::B, dummy_motion(T, 3)}};

    auto run = [&](TaskMode mode, bool do_backward) {
        Tape tape;
        const ConditioningBundle bundle = rig.bundle(tape, T, music, ex);
        auto out = rig.model->forward(tape, x_a, x_b, 0.35, bundle, mode);
        Var loss = add(mean_all(mul(out.v_a, out.v_a)), mean_all(mul(out.v_b, out.v_b)));
        const double v = loss.item();
        if (do_backward) tape.backward(loss);
        return v;
    };

    const std::vector<std::string> sampled = {
        "blk0.a.conv.k3.w", "blk0.a.conv.gates",  "blk0.b.self.wq",    "blk1.a.music.wo",
        "blk0.b.norm_motion.wscale", "blk1.b.ffn.w1", "proj_in.a.w",   "proj_out.b.w",
        "enc.text.tokens",  "enc.music.proj.w",   "enc.retr.proj.w",   "enc.retr.channels",
        "blk0.b.motion.wk", "enc.text.l0.attn.wv"};

    for (TaskMode mode : {TaskMode::Interactive, TaskMode::Reactive}) {
        rig.store.zero_grads();
        run(mode, true);
        for (const auto& name : sampled) {
            Parameter& p = rig.store.at(name);
            const size_t idx = Rng::hash_string(name) % p.value.size();
            const double analytic = p.grad.data[idx];
            const double h = 1e-5;
            const double original = p.value.data[idx];
            p.value.data[idx] = original + h;
            const double up = run(mode, false);
            p.value.data[idx] = original - h;
            const double down = run(mode, false);
            p.value.data[idx] = original;
            const double fd = (up - down) / (2 * h);
            const double scale = std::max({1e-8, std::abs(fd), std::abs(analytic)});
            INFO(name << " mode=" << task_mode_name(mode) << " fd=" << fd
                      << " analytic=" << analytic);
            CHECK(std::abs(fd - analytic) / scale < 1e-4);
        }
    }
}
