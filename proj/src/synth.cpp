// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dualflow/container.hpp"
#include "dualflow/errors.hpp"
#include "dualflow/rng.hpp"

namespace dualflow {

namespace {

using nlohmann::json;
constexpr double kTau = 6.283185307179586476925286766559;

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

struct Mat3 {
    // row-major
    std::array<double, 9> m = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 axis_angle(const Vec3& axis, double angle) {
        const double c = std::cos(angle), s = std::sin(angle), C = 1 - c;
        const double x = axis.x, y = axis.y, z = axis.z;
        Mat3 r;
        r.m = {c + x * x * C,     x * y * C - z * s, x * z * C + y * s,
               y * x * C + z * s, c + y * y * C,     y * z * C - x * s,
               z * x * C - y * s, z * y * C + x * s, c + z * z * C};
        return r;
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
                r.m[3 * i + j] = s;
            }
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
};

// Unit bone directions in the parent frame (y up, +z forward, +x dancer left).
std::array<Vec3, 22> bone_directions() {
    std::array<Vec3, 22> d{};
    d[1] = {1, 0, 0};    // l_hip
    d[2] = {-1, 0, 0};   // r_hip
    d[3] = {0, 1, 0};    // spine1
    d[4] = {0, -1, 0};   // l_knee
    d[5] = {0, -1, 0};   // r_knee
    d[6] = {0, 1, 0};    // spine2
    d[7] = {0, -1, 0};   // l_ankle
    d[8] = {0, -1, 0};   // r_ankle
    d[9] = {0, 1, 0};    // spine3
    d[10] = {0, 0, 1};   // l_foot
    d[11] = {0, 0, 1};   // r_foot
    d[12] = {0, 1, 0};   // neck
    d[13] = {1, 0, 0};   // l_collar
    d[14] = {-1, 0, 0};  // r_collar
    d[15] = {0, 1, 0};   // head
    d[16] = {1, 0, 0};   // l_shoulder
    d[17] = {-1, 0, 0};  // r_shoulder
    d[18] = {1, 0, 0};   // l_elbow
    d[19] = {-1, 0, 0};  // r_elbow
    d[20] = {1, 0, 0};   // l_wrist
    d[21] = {-1, 0, 0};  // r_wrist
    return d;
}

// Per-joint sway: axis, base amplitude (radians), cycles per beat, phase.
struct Sway {
    Vec3 axis{1, 0, 0};
    double amp = 0;
    double freq = 0;
    double phase = 0;
};

enum class Pattern { Orbit, Spin, Approach };

std::array<Sway, 22> base_sways(Pattern pattern) {
    std::array<Sway, 22> s{};
    auto set = [&](int j, Vec3 axis, double amp, double freq, double phase) {
        s[static_cast<size_t>(j)] = Sway{axis, amp, freq, phase};
    };
    // stepping legs (left/right half a cycle apart)
    set(1, {1, 0, 0}, 0.28, 0.5, 0.0);
    set(2, {1, 0, 0}, 0.28, 0.5, 0.5);
    set(4, {1, 0, 0}, 0.35, 0.5, 0.25);
    set(5, {1, 0, 0}, 0.35, 0.5, 0.75);
    set(7, {1, 0, 0}, 0.15, 0.5, 0.0);
    set(8, {1, 0, 0}, 0.15, 0.5, 0.5);
    set(10, {1, 0, 0}, 0.10, 0.5, 0.1);
    set(11, {1, 0, 0}, 0.10, 0.5, 0.6);
    // spine / head sway
    set(3, {0, 0, 1}, 0.06, 0.25, 0.0);
    set(6, {0, 0, 1}, 0.06, 0.25, 0.1);
    set(9, {0, 0, 1}, 0.05, 0.25, 0.2);
    set(12, {0, 0, 1}, 0.05, 0.25, 0.3);
    set(15, {0, 0, 1}, 0.04, 0.25, 0.4);
    // arms
    set(13, {0, 0, 1}, 0.04, 0.5, 0.0);
    set(14, {0, 0, 1}, 0.04, 0.5, 0.5);
    set(16, {0, 0, 1}, 0.22, 0.5, 0.0);
    set(17, {0, 0, 1}, 0.22, 0.5, 0.5);
    set(18, {0, 1, 0}, 0.30, 0.5, 0.25);
    set(19, {0, 1, 0}, 0.30, 0.5, 0.75);
    set(20, {0, 1, 0}, 0.12, 0.5, 0.0);
    set(21, {0, 1, 0}, 0.12, 0.5, 0.5);

    double legs = 1.0, arms = 1.0, spine = 1.0;
    switch (pattern) {
        case Pattern::Orbit: break;
        case Pattern::Spin: legs = 0.6; arms = 1.4; spine = 1.2; break;
        case Pattern::Approach: legs = 1.3; arms = 0.8; spine = 0.9; break;
    }
    for (int j : {1, 2, 4, 5, 7, 8, 10, 11}) s[static_cast<size_t>(j)].amp *= legs;
    for (int j : {13, 14, 16, 17, 18, 19, 20, 21}) s[static_cast<size_t>(j)].amp *= arms;
    for (int j : {3, 6, 9, 12, 15}) s[static_cast<size_t>(j)].amp *= spine;
    return s;
}

// Smoothstep beat phase: floor(t/P) + s(u) with s'(0) = s'(1) = 0, so every
// joint velocity vanishes exactly at beat times.
double beat_phase(double t, double period) {
    const double k = std::floor(t / period);
    const double u = t / period - k;
    return k + u * u * (3.0 - 2.0 * u);
}

struct PersonTrack {
    Vec3 root;
    double yaw = 0;
};

PersonTrack person_track(Pattern pattern, int person, double phi, double root_height) {
    PersonTrack p;
    p.root.y = root_height + 0.015 * std::sin(kTau * phi / 2.0);
    switch (pattern) {
        case Pattern::Orbit: {
            const double theta = kTau * phi / 16.0 + (person == 0 ? 0.0 : kTau / 2.0);
            const double r = 1.1;
            p.root.x = r * std::cos(theta);
            p.root.z = r * std::sin(theta);
            p.yaw = -theta;  // face the shared center
            break;
        }
        case Pattern::Spin: {
            p.root.x = person == 0 ? -0.7 : 0.7;
            p.root.z = 0.08 * std::sin(kTau * phi / 8.0);
            p.yaw = kTau * phi / 4.0 * (person == 0 ? 1.0 : -1.0);
            break;
        }
        case Pattern::Approach: {
            const double d = 0.65 + 0.4 * std::cos(kTau * phi / 8.0);
            p.root.z = person == 0 ? -d : d;
            p.yaw = person == 0 ? 0.0 : kTau / 2.0;  // face each other
            break;
        }
    }
    return p;
}

std::string tempo_word(double bpm) {
    if (bpm < 105) return "slow";
    if (bpm < 130) return "medium";
    return "fast";
}

struct PersonNoise {
    std::array<double, 22> amp_jitter{};
    std::array<double, 22> phase_jitter{};
};

PersonNoise draw_person_noise(Rng& rng, double noise_scale) {
    PersonNoise n;
    for (int j = 0; j < 22; ++j) {
        n.amp_jitter[static_cast<size_t>(j)] = 1.0 + noise_scale * rng.normal();
        n.phase_jitter[static_cast<size_t>(j)] = 0.25 * noise_scale * rng.normal();
    }
    return n;
}

// FK pose for one person at beat phase phi; returns packed global positions
// and per-joint local rotations (root yaw excluded from the rotation list).
void pose_person(const Skeleton& skel, const std::array<Vec3, 22>& dirs,
                 const std::array<Sway, 22>& sways, const PersonNoise& noise,
                 const PersonTrack& track, double phi, std::vector<double>& positions,
                 std::vector<std::array<double, 6>>& rotations6d) {
    const int jc = skel.joint_count;
    std::vector<Mat3> global_rot(static_cast<size_t>(jc));
    std::vector<Vec3> global_pos(static_cast<size_t>(jc));
    positions.assign(static_cast<size_t>(3 * jc), 0.0);
    rotations6d.assign(static_cast<size_t>(jc - 1), {1, 0, 0, 0, 1, 0});

    global_rot[0] = Mat3::axis_angle({0, 1, 0}, track.yaw);
    global_pos[0] = track.root;

    for (int j = 1; j < jc; ++j) {
        const Sway& sw = sways[static_cast<size_t>(j)];
        const double angle =
            sw.amp * noise.amp_jitter[static_cast<size_t>(j)] *
            std::sin(kTau * (sw.freq * phi + sw.phase + noise.phase_jitter[static_cast<size_t>(j)]));
        const Mat3 local = Mat3::axis_angle(sw.axis, angle);
        const int parent = skel.parent_index[static_cast<size_t>(j)];
        global_rot[static_cast<size_t>(j)] = global_rot[static_cast<size_t>(parent)] * local;
        const Vec3 d = dirs[static_cast<size_t>(j)];
        const Vec3 offset = global_rot[static_cast<size_t>(parent)] *
                            Vec3{d.x * skel.bone_lengths[static_cast<size_t>(j)],
                                 d.y * skel.bone_lengths[static_cast<size_t>(j)],
                                 d.z * skel.bone_lengths[static_cast<size_t>(j)]};
        global_pos[static_cast<size_t>(j)] = {global_pos[static_cast<size_t>(parent)].x + offset.x,
                                              global_pos[static_cast<size_t>(parent)].y + offset.y,
                                              global_pos[static_cast<size_t>(parent)].z + offset.z};
        rotations6d[static_cast<size_t>(j - 1)] = rotation_to_6d(local.m);
    }
    for (int j = 0; j < jc; ++j) {
        positions[static_cast<size_t>(3 * j)] = global_pos[static_cast<size_t>(j)].x;
        positions[static_cast<size_t>(3 * j + 1)] = global_pos[static_cast<size_t>(j)].y;
        positions[static_cast<size_t>(3 * j + 2)] = global_pos[static_cast<size_t>(j)].z;
    }
}

Tensor build_music_features(const GeneratorConfig& config, double tempo, size_t genre_index,
                            Rng& rng) {
    const int d_m = config.music_dim;
    Tensor feats(config.n_frames, d_m);
    // fixed per-genre embedding, independent of the clip seed
    Rng genre_rng(Rng::mix(0x6d757369, genre_index));
    std::vector<double> genre_emb(static_cast<size_t>(d_m));
    for (auto& v : genre_emb) v = genre_rng.normal();

    const int harmonics = std::min(4, d_m / 2);
    const double tempo_norm =
        (tempo - config.tempo_min) / std::max(1e-9, config.tempo_max - config.tempo_min);
    for (int t = 0; t < config.n_frames; ++t) {
        const double beat = (t / config.fps) * tempo / 60.0;
        double* row = feats.row(t);
        int c = 0;
        for (int h = 0; h < harmonics; ++h) {
            row[c++] = std::sin(kTau * (h + 1) * beat);
            row[c++] = std::cos(kTau * (h + 1) * beat);
        }
        if (c < d_m) row[c++] = tempo_norm;
        for (; c < d_m; ++c) row[c] = 0.5 * genre_emb[static_cast<size_t>(c)];
        for (int k = 0; k < d_m; ++k) row[k] += config.noise_scale * 0.1 * rng.normal();
    }
    return feats;
}

std::string spatial_template(const std::string& interaction) {
    if (interaction.find("hold") != std::string::npos)
        return "The dancers are in a closed position, facing each other with a hand-to-hand "
               "connection in " + interaction + ".";
    if (interaction.find("spin") != std::string::npos)
        return "The dancers are in an open position at arm's length while one turns under the "
               "raised connection.";
    return "The dancers start apart and move toward each other, staying face to face.";
}

std::string body_template(Pattern pattern) {
    switch (pattern) {
        case Pattern::Orbit:
            return "Both dancers travel with smooth rotating steps, arms holding the frame while "
                   "the legs carry the motion.";
        case Pattern::Spin:
            return "The follower executes a controlled spin, torso and arms engaged with medium "
                   "energy while the leader keeps a steady posture.";
        case Pattern::Approach:
            return "Both dancers step toward each other with measured leg and foot movements, "
                   "closing the distance together.";
    }
    return {};
}

}  // namespace

void GeneratorConfig::validate() const {
    require(n_frames >= 2, "generator: n_frames must be at least 2");
    require(fps > 0, "generator: fps must be positive");
    require(tempo_min > 0 && tempo_max >= tempo_min, "generator: tempo range must be positive");
    require(!genres.empty(), "generator: genre vocabulary must be non-empty");
    require(!interactions.empty(), "generator: interaction vocabulary must be non-empty");
    require(music_dim >= 1, "generator: music_dim must be at least 1");
    require(noise_scale >= 0, "generator: noise scale must be non-negative");
}

std::vector<double> beat_grid(double tempo_bpm, double duration_s) {
    require(tempo_bpm > 0, "beat_grid: tempo must be positive, got " + std::to_string(tempo_bpm));
    std::vector<double> beats;
    const double period = 60.0 / tempo_bpm;
    for (int k = 0;; ++k) {
        const double t = k * period;
        if (t >= duration_s) break;
        beats.push_back(t);
    }
    return beats;
}

DuetClip generate_clip(uint64_t seed, const GeneratorConfig& config) {
    config.validate();
    Rng root_rng(Rng::mix(config.seed, seed));
    Rng rng_style = root_rng.fork(1);
    Rng rng_noise_a = root_rng.fork(2);
    Rng rng_noise_b = root_rng.fork(3);
    Rng rng_music = root_rng.fork(4);

    DuetClip clip;
    clip.clip_id = static_cast<int>(seed);
    clip.tempo_bpm = rng_style.uniform(config.tempo_min, config.tempo_max);
    const size_t genre_index = rng_style.index(config.genres.size());
    clip.genre = config.genres[genre_index];
    clip.interaction = config.interactions[rng_style.index(config.interactions.size())];
    const Pattern pattern = static_cast<Pattern>(genre_index % 3);

    clip.beat_times = beat_grid(clip.tempo_bpm, config.duration_s());

    const Skeleton skel = default_skeleton();
    const MotionLayout layout{skel.joint_count};
    const auto dirs = bone_directions();
    const auto sways = base_sways(pattern);
    const PersonNoise noise_a = draw_person_noise(rng_noise_a, config.noise_scale);
    const PersonNoise noise_b = draw_person_noise(rng_noise_b, config.noise_scale);
    const double period = 60.0 / clip.tempo_bpm;
    const double root_height = 0.92;

    Tensor pos_a(config.n_frames, 3 * skel.joint_count);
    Tensor pos_b(config.n_frames, 3 * skel.joint_count);
    std::vector<std::vector<std::array<double, 6>>> rots_a(static_cast<size_t>(config.n_frames));
    std::vector<std::vector<std::array<double, 6>>> rots_b(static_cast<size_t>(config.n_frames));

    std::vector<double> pose(static_cast<size_t>(3 * skel.joint_count));
    for (int t = 0; t < config.n_frames; ++t) {
        const double phi = beat_phase(t / config.fps, period);
        pose_person(skel, dirs, sways, noise_a, person_track(pattern, 0, phi, root_height), phi,
                    pose, rots_a[static_cast<size_t>(t)]);
        std::memcpy(pos_a.row(t), pose.data(), sizeof(double) * pose.size());
        pose_person(skel, dirs, sways, noise_b, person_track(pattern, 1, phi, root_height), phi,
                    pose, rots_b[static_cast<size_t>(t)]);
        std::memcpy(pos_b.row(t), pose.data(), sizeof(double) * pose.size());
    }

    const Tensor vel_a = compute_velocities(pos_a, config.fps);
    const Tensor vel_b = compute_velocities(pos_b, config.fps);
    // generated feet hover near ankle height; label contacts with thresholds
    // matched to this skeleton rather than the strict runtime defaults
    const Tensor con_a = detect_foot_contacts(pos_a, config.fps, skel, 0.35, 0.30);
    const Tensor con_b = detect_foot_contacts(pos_b, config.fps, skel, 0.35, 0.30);

    auto pack_person = [&](const Tensor& pos, const Tensor& vel, const Tensor& con,
                           const std::vector<std::vector<std::array<double, 6>>>& rots) {
        Tensor frames(config.n_frames, layout.frame_dim());
        for (int t = 0; t < config.n_frames; ++t) {
            FrameVector f;
            f.positions.assign(pos.row(t), pos.row(t) + pos.cols);
            f.velocities.assign(vel.row(t), vel.row(t) + vel.cols);
            for (const auto& r : rots[static_cast<size_t>(t)])
                f.rotations6d.insert(f.rotations6d.end(), r.begin(), r.end());
            f.contacts.assign(con.row(t), con.row(t) + 4);
            const auto packed = pack_frame(layout, f);
            std::memcpy(frames.row(t), packed.data(), sizeof(double) * packed.size());
        }
        return frames;
    };

    clip.motion.fps = config.fps;
    clip.motion.frames_a = pack_person(pos_a, vel_a, con_a, rots_a);
    clip.motion.frames_b = pack_person(pos_b, vel_b, con_b, rots_b);
    clip.motion = to_relative_frame(clip.motion, layout);

    clip.music_features = build_music_features(config, clip.tempo_bpm, genre_index, rng_music);

    const std::string tempo_w = tempo_word(clip.tempo_bpm);
    clip.text = "A " + clip.genre + " duet in " + clip.interaction + ", danced at a " + tempo_w +
                " tempo with steps landing on every beat.";
    clip.decomposition.spatial = spatial_template(clip.interaction);
    clip.decomposition.body = body_template(pattern);
    char rhythm_buf[160];
    std::snprintf(rhythm_buf, sizeof(rhythm_buf),
                  "The movement keeps a %s tempo near %.0f beats per minute, with a continuous "
                  "%s rhythm and steps on every count.",
                  tempo_w.c_str(), clip.tempo_bpm, clip.genre.c_str());
    clip.decomposition.rhythm = rhythm_buf;
    return clip;
}

namespace {

json record_to_json(const DatasetRecord& r) {
    return json{{"clip_id", r.clip_id},
                {"motion_path", r.motion_path},
                {"music_path", r.music_path},
                {"text", r.text},
                {"decomposition",
                 {{"spatial", r.decomposition.spatial},
                  {"body", r.decomposition.body},
                  {"rhythm", r.decomposition.rhythm}}},
                {"genre", r.genre},
                {"tempo_bpm", r.tempo_bpm},
                {"beat_times", r.beat_times}};
}

DatasetRecord record_from_json(const json& j) {
    DatasetRecord r;
    r.clip_id = j.at("clip_id").get<int>();
    r.motion_path = j.at("motion_path").get<std::string>();
    r.music_path = j.at("music_path").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.decomposition.spatial = j.at("decomposition").at("spatial").get<std::string>();
    r.decomposition.body = j.at("decomposition").at("body").get<std::string>();
    r.decomposition.rhythm = j.at("decomposition").at("rhythm").get<std::string>();
    r.genre = j.at("genre").get<std::string>();
    r.tempo_bpm = j.at("tempo_bpm").get<double>();
    r.beat_times = j.at("beat_times").get<std::vector<double>>();
    return r;
}

}  // namespace

Dataset generate_dataset(int n, const GeneratorConfig& config, const std::string& out_dir) {
    require(n >= 1, "generate_dataset: need at least one clip");
    config.validate();
    std::filesystem::create_directories(out_dir);

    std::vector<DuetClip> clips(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (int i = 0; i < n; ++i)
        clips[static_cast<size_t>(i)] = generate_clip(static_cast<uint64_t>(i), config);

    Dataset ds;
    ds.root_dir = out_dir;
    std::ofstream manifest(out_dir + "/manifest.jsonl");
    require(manifest.is_open(), "generate_dataset: cannot write manifest in '" + out_dir + "'");
    for (int i = 0; i < n; ++i) {
        const DuetClip& clip = clips[static_cast<size_t>(i)];
        char motion_name[64], music_name[64];
        std::snprintf(motion_name, sizeof(motion_name), "clip_%05d.dfmo", i);
        std::snprintf(music_name, sizeof(music_name), "music_%05d.dfmo", i);
        write_motion_container(out_dir + "/" + motion_name, clip.motion, 22);
        write_feature_container(out_dir + "/" + music_name, clip.music_features, clip.motion.fps);

        DatasetRecord rec;
        rec.clip_id = clip.clip_id;
        rec.motion_path = motion_name;
        rec.music_path = music_name;
        rec.text = clip.text;
        rec.decomposition = clip.decomposition;
        rec.genre = clip.genre;
        rec.tempo_bpm = clip.tempo_bpm;
        rec.beat_times = clip.beat_times;
        manifest << record_to_json(rec).dump() << "\n";
        ds.records.push_back(std::move(rec));
    }
    require(manifest.good(), "generate_dataset: manifest write failed");
    return ds;
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    require(in.is_open(), "load_dataset: cannot open '" + manifest_path + "'");
    Dataset ds;
    ds.root_dir = std::filesystem::path(manifest_path).parent_path().string();
    if (ds.root_dir.empty()) ds.root_dir = ".";
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        require(!j.is_discarded(), "load_dataset: malformed manifest line");
        ds.records.push_back(record_from_json(j));
    }
    require(!ds.records.empty(), "load_dataset: manifest '" + manifest_path + "' is empty");
    return ds;
}

DuetClip load_clip(const Dataset& dataset, size_t index) {
    require(index < dataset.records.size(), "load_clip: index out of range");
    const DatasetRecord& rec = dataset.records[index];
    DuetClip clip;
    clip.clip_id = rec.clip_id;
    clip.motion = read_motion_container(dataset.root_dir + "/" + rec.motion_path);
    clip.music_features = read_feature_container(dataset.root_dir + "/" + rec.music_path);
    clip.text = rec.text;
    clip.decomposition = rec.decomposition;
    clip.genre = rec.genre;
    clip.tempo_bpm = rec.tempo_bpm;
    clip.beat_times = rec.beat_times;
    return clip;
}

}  // namespace dualflow
