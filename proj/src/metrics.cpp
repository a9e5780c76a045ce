// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "dualflow/checkpoint.hpp"
#include "dualflow/kernels.hpp"

namespace dualflow {

namespace {

std::vector<int> hash_tokens(const std::string& text, int buckets) {
    std::vector<int> ids;
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        ids.push_back(static_cast<int>(Rng::hash_string(token) % static_cast<uint64_t>(buckets)));
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    if (ids.empty()) ids.push_back(0);
    return ids;
}

Tensor duet_rows(const DuetSequence& motion) {
    const int T = motion.n_frames();
    const int fd = motion.frames_a.cols;
    Tensor rows(T, 2 * fd);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < fd; ++j) {
            rows.at(t, j) = motion.frames_a.at(t, j);
            rows.at(t, fd + j) = motion.frames_b.at(t, j);
        }
    return rows;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Jacobi eigendecomposition of a symmetric matrix; returns eigenvalues and
// fills eigenvectors as columns of V.
std::vector<double> jacobi_eigen(Tensor a, Tensor* v_out) {
    const int n = a.rows;
    Tensor v(n, n);
    for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = a.at(i, i);
    if (v_out) *v_out = std::move(v);
    return eig;
}

// Symmetric PSD square root with eigenvalue clamping at zero.
Tensor sqrtm_psd(const Tensor& m) {
    Tensor v;
    std::vector<double> eig = jacobi_eigen(m, &v);
    const int n = m.rows;
    Tensor out(n, n);
    for (int k = 0; k < n; ++k) {
        const double lam = eig[static_cast<size_t>(k)];
        const double s = lam > 0 ? std::sqrt(lam) : 0.0;  // clamp roundoff negatives
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out.at(i, j) += s * v.at(i, k) * v.at(j, k);
    }
    return out;
}

Tensor matmul_small(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows, b.cols);
    kernels::matmul(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols);
    return c;
}

void moments(const std::vector<std::vector<double>>& features, Tensor& mu, Tensor& cov) {
    const int n = static_cast<int>(features.size());
    const int d = static_cast<int>(features[0].size());
    mu = Tensor(1, d);
    for (const auto& f : features)
        for (int j = 0; j < d; ++j) mu.at(0, j) += f[static_cast<size_t>(j)];
    for (int j = 0; j < d; ++j) mu.at(0, j) /= n;
    cov = Tensor(d, d);
    for (const auto& f : features)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                cov.at(i, j) += (f[static_cast<size_t>(i)] - mu.at(0, i)) *
                                (f[static_cast<size_t>(j)] - mu.at(0, j));
    const double denom = n > 1 ? n - 1.0 : 1.0;
    for (auto& x : cov.data) x /= denom;
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureExtractor
// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const EvaluatorConfig& config) : config_(config) {
    require(config.feature_dim >= 1 && config.motion_hidden >= 1,
            "evaluator: dimensions must be positive");
    Rng rng(Rng::mix(config.seed, 0xfe47));
    const double sd = 0.05;
    store_.create("eval.motion.w1", 524, config.motion_hidden, rng, sd);
    store_.create_zeros("eval.motion.b1", 1, config.motion_hidden);
    store_.create("eval.motion.w2", config.motion_hidden, config.feature_dim, rng, sd);
    store_.create_zeros("eval.motion.b2", 1, config.feature_dim);
    store_.create("eval.text.tokens", config.text_hash_buckets, config.motion_hidden, rng, sd);
    store_.create("eval.text.w", config.motion_hidden, config.feature_dim, rng, sd);
    store_.create_zeros("eval.text.b", 1, config.feature_dim);
}

Var FeatureExtractor::motion_tower(Tape& tape, const Tensor& rows) const {
    require(rows.cols == 524, "evaluator: motion rows must be T x 524");
    auto& store = const_cast<ParamStore&>(store_);
    Var h = add_rowvec(matmul(tape.constant(rows), tape.param(store.at("eval.motion.w1"))),
                       tape.param(store.at("eval.motion.b1")));
    h = gelu(h);
    Var pooled = mean_rows(h);
    Var f = add_rowvec(matmul(pooled, tape.param(store.at("eval.motion.w2"))),
                       tape.param(store.at("eval.motion.b2")));
    return l2_normalize_rows(f);
}

Var FeatureExtractor::text_tower(Tape& tape, const std::string& text) const {
    auto& store = const_cast<ParamStore&>(store_);
    const std::vector<int> ids = hash_tokens(text, config_.text_hash_buckets);
    Var tokens = gather_rows(tape.param(store.at("eval.text.tokens")), ids);
    Var pooled = gelu(mean_rows(tokens));
    Var f = add_rowvec(matmul(pooled, tape.param(store.at("eval.text.w"))),
                       tape.param(store.at("eval.text.b")));
    return l2_normalize_rows(f);
}

void FeatureExtractor::train(const std::vector<DuetClip>& clips) {
    require(clips.size() >= 2, "evaluator: need at least two clips to train");
    std::vector<Tensor> rows;
    rows.reserve(clips.size());
    for (const auto& c : clips) rows.push_back(duet_rows(c.motion));

    Rng order_rng(Rng::mix(config_.seed, 0x0d3a));
    const int batch = std::min<int>(config_.batch_size, static_cast<int>(clips.size()));
    for (int step = 0; step < config_.train_steps; ++step) {
        // sample a batch without replacement
        std::vector<size_t> idx(clips.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[order_rng.index(i)]);
        idx.resize(static_cast<size_t>(batch));

        Tape tape;
        store_.zero_grads();
        std::vector<Var> motion_f, text_f;
        for (size_t i : idx) {
            motion_f.push_back(motion_tower(tape, rows[i]));
            text_f.push_back(text_tower(tape, clips[i].text));
        }
        // symmetric InfoNCE over the batch cosine matrix: each motion must
        // pick out its own text among the batch, and vice versa
        Var motion_mat = concat_rows(motion_f);  // [batch x dim], rows unit norm
        Var text_mat = concat_rows(text_f);
        const double inv_temp = 1.0 / config_.temperature;
        Var logits_mt = scale(matmul_nt(motion_mat, text_mat), inv_temp);  // [batch x batch]
        Var probs_mt = softmax_rows(logits_mt, nullptr);
        Var logits_tm = scale(matmul_nt(text_mat, motion_mat), inv_temp);
        Var probs_tm = softmax_rows(logits_tm, nullptr);
        // pull the diagonal with a constant selector mask
        Tensor eye(batch, batch);
        for (int i = 0; i < batch; ++i) eye.at(i, i) = 1.0;
        Var diag_mt = sum_all(mul_const(log_val(probs_mt), eye));
        Var diag_tm = sum_all(mul_const(log_val(probs_tm), eye));
        Var loss = scale(add(diag_mt, diag_tm), -0.5 / batch);
        tape.backward(loss);

        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bias1 = 1.0 - std::pow(b1, step + 1.0);
        const double bias2 = 1.0 - std::pow(b2, step + 1.0);
        for (const auto& p : store_.all()) {
            for (size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad.data[i];
                p->adam_m.data[i] = b1 * p->adam_m.data[i] + (1 - b1) * g;
                p->adam_v.data[i] = b2 * p->adam_v.data[i] + (1 - b2) * g * g;
                p->value.data[i] -= config_.lr * (p->adam_m.data[i] / bias1) /
                                    (std::sqrt(p->adam_v.data[i] / bias2) + eps);
            }
        }
    }
    trained_ = true;
    // freeze and fingerprint (same hash the checkpoint writer would produce)
    uint64_t h = 1469598103934665603ull;
    for (const auto& p : store_.all())
        for (double v : p->value.data) {
            const float f = static_cast<float>(v);
            const auto* bytes = reinterpret_cast<const unsigned char*>(&f);
            for (size_t b = 0; b < sizeof(float); ++b) {
                h ^= bytes[b];
                h *= 1099511628211ull;
            }
        }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    checkpoint_id_ = hex;
}

std::vector<double> FeatureExtractor::motion_features(const DuetSequence& motion) const {
    Tape tape;
    tape.set_grad_enabled(false);
    const Var f = motion_tower(tape, duet_rows(motion));
    return f.val().data;
}

std::vector<double> FeatureExtractor::text_features(const std::string& text) const {
    Tape tape;
    tape.set_grad_enabled(false);
    const Var f = text_tower(tape, text);
    return f.val().data;
}

void FeatureExtractor::save(const std::string& prefix) const {
    const CheckpointInfo info = save_checkpoint(prefix, store_, {});
    const_cast<FeatureExtractor*>(this)->checkpoint_id_ = info.checkpoint_id;
}

void FeatureExtractor::load(const std::string& prefix) {
    const CheckpointInfo info = load_checkpoint(prefix, store_);
    checkpoint_id_ = info.checkpoint_id;
    trained_ = true;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

double fid_from_moments(const Tensor& mu_real, const Tensor& cov_real, const Tensor& mu_gen,
                        const Tensor& cov_gen) {
    require(mu_real.cols == mu_gen.cols && cov_real.rows == cov_real.cols &&
                cov_real.rows == mu_real.cols && cov_gen.rows == cov_gen.cols,
            "fid: moment shape mismatch");
    double mean_term = 0;
    for (int j = 0; j < mu_real.cols; ++j) {
        const double d = mu_real.at(0, j) - mu_gen.at(0, j);
        mean_term += d * d;
    }
    double trace_r = 0, trace_g = 0;
    for (int i = 0; i < cov_real.rows; ++i) {
        trace_r += cov_real.at(i, i);
        trace_g += cov_gen.at(i, i);
    }
    // tr((Sr Sg)^{1/2}) via the symmetric similarity Sr^{1/2} Sg Sr^{1/2}
    const Tensor root_r = sqrtm_psd(cov_real);
    Tensor inner = matmul_small(matmul_small(root_r, cov_gen), root_r);
    // symmetrize roundoff
    for (int i = 0; i < inner.rows; ++i)
        for (int j = i + 1; j < inner.cols; ++j) {
            const double m = 0.5 * (inner.at(i, j) + inner.at(j, i));
            inner.at(i, j) = m;
            inner.at(j, i) = m;
        }
    const std::vector<double> eig = jacobi_eigen(inner, nullptr);
    double trace_sqrt = 0;
    for (double lam : eig) trace_sqrt += lam > 0 ? std::sqrt(lam) : 0.0;
    return mean_term + trace_r + trace_g - 2.0 * trace_sqrt;
}

double fid(const std::vector<std::vector<double>>& real_features,
           const std::vector<std::vector<double>>& gen_features) {
    require(real_features.size() >= 2 && gen_features.size() >= 2,
            "fid: need at least two samples per side");
    require(real_features[0].size() == gen_features[0].size(), "fid: feature dims differ");
    Tensor mu_r, cov_r, mu_g, cov_g;
    moments(real_features, mu_r, cov_r);
    moments(gen_features, mu_g, cov_g);
    return fid_from_moments(mu_r, cov_r, mu_g, cov_g);
}

RPrecisionResult r_precision_and_mmdist(const std::vector<std::vector<double>>& text_features,
                                        const std::vector<std::vector<double>>& motion_features,
                                        int batch_size, uint64_t seed) {
    require(text_features.size() == motion_features.size(),
            "r_precision: feature lists must pair up");
    const int n = static_cast<int>(text_features.size());
    require(n >= batch_size, "r_precision: need at least " + std::to_string(batch_size) +
                                 " pairs, got " + std::to_string(n));

    RPrecisionResult out;
    for (int i = 0; i < n; ++i)
        out.mm_dist += euclidean(text_features[static_cast<size_t>(i)],
                                 motion_features[static_cast<size_t>(i)]);
    out.mm_dist /= n;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(seed, 0x4192));
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);

    const int n_batches = n / batch_size;
    int counted = 0, top1 = 0, top2 = 0, top3 = 0;
    for (int b = 0; b < n_batches; ++b) {
        const int* batch = order.data() + static_cast<size_t>(b) * batch_size;
        for (int qi = 0; qi < batch_size; ++qi) {
            const auto& text = text_features[static_cast<size_t>(batch[qi])];
            // rank of the true motion among the batch by distance; ties break
            // toward the lower candidate index so the result stays defined
            const double true_dist =
                euclidean(text, motion_features[static_cast<size_t>(batch[qi])]);
            int rank = 0;
            for (int ci = 0; ci < batch_size; ++ci) {
                if (ci == qi) continue;
                const double d = euclidean(text, motion_features[static_cast<size_t>(batch[ci])]);
                if (d < true_dist || (d == true_dist && ci < qi)) ++rank;
            }
            if (rank < 1) ++top1;
            if (rank < 2) ++top2;
            if (rank < 3) ++top3;
            ++counted;
        }
    }
    out.top1 = static_cast<double>(top1) / counted;
    out.top2 = static_cast<double>(top2) / counted;
    out.top3 = static_cast<double>(top3) / counted;
    return out;
}

DiversityResult diversity_and_mmodality(const std::vector<std::vector<double>>& gen_features,
                                        const std::vector<std::vector<int>>& condition_groups,
                                        int n_pairs, uint64_t seed) {
    require(gen_features.size() >= 2, "diversity: need at least two samples");
    require(n_pairs >= 1, "diversity: n_pairs must be >= 1");
    DiversityResult out;

    Rng rng(Rng::mix(seed, 0xd1f5));
    double acc = 0;
    for (int k = 0; k < n_pairs; ++k) {
        const size_t i = rng.index(gen_features.size());
        size_t j = rng.index(gen_features.size() - 1);
        if (j >= i) ++j;
        acc += euclidean(gen_features[i], gen_features[j]);
    }
    out.diversity = acc / n_pairs;

    double group_acc = 0;
    int group_count = 0;
    for (const auto& group : condition_groups) {
        if (group.size() < 2) {
            ++out.skipped_groups;
            continue;
        }
        double g = 0;
        int pairs = 0;
        for (size_t i = 0; i < group.size(); ++i)
            for (size_t j = i + 1; j < group.size(); ++j) {
                g += euclidean(gen_features[static_cast<size_t>(group[i])],
                               gen_features[static_cast<size_t>(group[j])]);
                ++pairs;
            }
        group_acc += g / pairs;
        ++group_count;
    }
    out.mmodality = group_count > 0 ? group_acc / group_count : 0.0;
    return out;
}

std::vector<double> kinematic_beats(const Tensor& frames, double fps, int smoothing_window) {
    require(frames.rows >= 3, "kinematic_beats: need at least three frames");
    require(smoothing_window >= 1 && smoothing_window % 2 == 1,
            "kinematic_beats: smoothing window must be odd and positive");
    const int persons = frames.cols >= 524 ? 2 : 1;
    const int joints = 22;
    const int n = frames.rows;

    std::vector<double> speed(static_cast<size_t>(n - 1), 0.0);
    for (int t = 0; t + 1 < n; ++t) {
        double s = 0;
        for (int p = 0; p < persons; ++p) {
            const int base = p * 262;
            for (int j = 0; j < joints; ++j) {
                const double dx = frames.at(t + 1, base + 3 * j) - frames.at(t, base + 3 * j);
                const double dy =
                    frames.at(t + 1, base + 3 * j + 1) - frames.at(t, base + 3 * j + 1);
                const double dz =
                    frames.at(t + 1, base + 3 * j + 2) - frames.at(t, base + 3 * j + 2);
                s += std::sqrt(dx * dx + dy * dy + dz * dz);
            }
        }
        speed[static_cast<size_t>(t)] = s / (persons * joints) * fps;
    }

    // centered moving average
    std::vector<double> smooth(speed.size());
    const int half = smoothing_window / 2;
    for (int t = 0; t < static_cast<int>(speed.size()); ++t) {
        double acc = 0;
        int cnt = 0;
        for (int u = std::max(0, t - half);
             u <= std::min(static_cast<int>(speed.size()) - 1, t + half); ++u) {
            acc += speed[static_cast<size_t>(u)];
            ++cnt;
        }
        smooth[static_cast<size_t>(t)] = acc / cnt;
    }

    std::vector<double> beats;
    const int m = static_cast<int>(smooth.size());
    for (int t = 0; t < m; ++t) {
        bool is_min;
        if (t == 0)
            is_min = m > 1 && smooth[0] < smooth[1];
        else if (t == m - 1)
            is_min = smooth[static_cast<size_t>(t)] < smooth[static_cast<size_t>(t - 1)];
        else
            is_min = smooth[static_cast<size_t>(t)] <= smooth[static_cast<size_t>(t - 1)] &&
                     smooth[static_cast<size_t>(t)] <= smooth[static_cast<size_t>(t + 1)] &&
                     (smooth[static_cast<size_t>(t)] < smooth[static_cast<size_t>(t - 1)] ||
                      smooth[static_cast<size_t>(t)] < smooth[static_cast<size_t>(t + 1)]);
        if (is_min) beats.push_back((t + 0.5) / fps);
    }
    return beats;
}

double beat_alignment_from_lists(const std::vector<double>& reference_beats,
                                 const std::vector<double>& kinematic, double sigma) {
    require(sigma > 0, "beat alignment: sigma must be positive");
    if (reference_beats.empty()) return 0.0;
    if (kinematic.empty()) return 0.0;
    double acc = 0;
    for (double b : reference_beats) {
        double best = 1e300;
        for (double k : kinematic) best = std::min(best, (k - b) * (k - b));
        acc += std::exp(-best / (2.0 * sigma * sigma));
    }
    return acc / static_cast<double>(reference_beats.size());
}

double beat_align_score(const Tensor& frames, double fps, const std::vector<double>& music_beats,
                        double sigma, int smoothing_window) {
    return beat_alignment_from_lists(music_beats, kinematic_beats(frames, fps, smoothing_window),
                                     sigma);
}

double beat_echo_degree(const Tensor& frames_a, const Tensor& frames_b, double fps, double sigma,
                        int smoothing_window) {
    return beat_alignment_from_lists(kinematic_beats(frames_a, fps, smoothing_window),
                                     kinematic_beats(frames_b, fps, smoothing_window), sigma);
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["fid"] = fid;
    j["r_precision"] = {{"top1", r_top1}, {"top2", r_top2}, {"top3", r_top3}};
    j["mm_dist"] = mm_dist;
    j["diversity"] = diversity;
    j["mmodality"] = mmodality;
    j["bed"] = bed;
    j["bas"] = bas;
    j["evaluator_checkpoint"] = evaluator_checkpoint;
    j["dataset_manifest_hash"] = dataset_manifest_hash;
    j["metric_seed"] = metric_seed;
    return j.dump(2);
}

}  // namespace dualflow
