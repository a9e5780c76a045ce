// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/container.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "dualflow/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts are unsupported");

namespace dualflow {

namespace {

using nlohmann::json;

void write_header_and_payload(const std::string& path, const json& header,
                              const std::vector<float>& payload) {
    std::ofstream out(path, std::ios::binary);
    require(out.is_open(), "container: cannot open '" + path + "' for writing");
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out.good()) throw std::runtime_error("container: write failed for '" + path + "'");
}

json read_header(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("container: missing header line in '" + path + "'");
    json header = json::parse(line, nullptr, false);
    require(!header.is_discarded() && header.is_object(),
            "container: header of '" + path + "' is not a JSON object");
    for (const char* key : {"schema_version", "fps", "n_frames", "n_persons", "joint_count"})
        require(header.contains(key),
                "container: header of '" + path + "' lacks key '" + key + "'");
    require(header["schema_version"].get<int>() == kContainerSchemaVersion,
            "container: unsupported schema_version in '" + path + "'");
    return header;
}

std::vector<float> read_payload(std::ifstream& in, const std::string& path,
                                size_t expected_floats) {
    std::vector<char> bytes(std::istreambuf_iterator<char>(in), {});
    require(bytes.size() == expected_floats * sizeof(float),
            "container: payload of '" + path + "' has " + std::to_string(bytes.size()) +
                " bytes, expected " + std::to_string(expected_floats * sizeof(float)));
    std::vector<float> payload(expected_floats);
    std::memcpy(payload.data(), bytes.data(), bytes.size());
    return payload;
}

}  // namespace

void write_motion_container(const std::string& path, const DuetSequence& duet, int joint_count) {
    MotionLayout layout{joint_count};
    const int dim = layout.frame_dim();
    require(duet.frames_a.cols == dim && duet.frames_b.cols == dim,
            "container: frame width does not match joint_count");
    require(duet.frames_a.rows == duet.frames_b.rows,
            "container: persons have different frame counts");
    json header = {{"schema_version", kContainerSchemaVersion},
                   {"fps", duet.fps},
                   {"n_frames", duet.n_frames()},
                   {"n_persons", 2},
                   {"joint_count", joint_count}};
    std::vector<float> payload;
    payload.reserve(static_cast<size_t>(2) * duet.n_frames() * dim);
    for (const Tensor* frames : {&duet.frames_a, &duet.frames_b})
        for (double v : frames->data) payload.push_back(static_cast<float>(v));
    write_header_and_payload(path, header, payload);
}

DuetSequence read_motion_container(const std::string& path, int* joint_count_out) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), "container: cannot open '" + path + "'");
    const json header = read_header(in, path);
    const int n_frames = header["n_frames"].get<int>();
    const int n_persons = header["n_persons"].get<int>();
    const int jc = header["joint_count"].get<int>();
    require(n_persons == 2, "container: '" + path + "' is not a duet motion file");
    MotionLayout layout{jc};
    const int dim = layout.frame_dim();
    const auto payload =
        read_payload(in, path, static_cast<size_t>(n_persons) * n_frames * dim);

    DuetSequence duet;
    duet.fps = header["fps"].get<double>();
    duet.frames_a = Tensor(n_frames, dim);
    duet.frames_b = Tensor(n_frames, dim);
    for (size_t i = 0; i < duet.frames_a.size(); ++i)
        duet.frames_a.data[i] = static_cast<double>(payload[i]);
    for (size_t i = 0; i < duet.frames_b.size(); ++i)
        duet.frames_b.data[i] = static_cast<double>(payload[duet.frames_a.size() + i]);
    if (joint_count_out) *joint_count_out = jc;
    return duet;
}

void write_feature_container(const std::string& path, const Tensor& features, double fps) {
    json header = {{"schema_version", kContainerSchemaVersion},
                   {"fps", fps},
                   {"n_frames", features.rows},
                   {"n_persons", 1},
                   {"joint_count", features.cols}};  // feature dimension
    std::vector<float> payload;
    payload.reserve(features.size());
    for (double v : features.data) payload.push_back(static_cast<float>(v));
    write_header_and_payload(path, header, payload);
}

Tensor read_feature_container(const std::string& path, double* fps_out) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), "container: cannot open '" + path + "'");
    const json header = read_header(in, path);
    const int n_frames = header["n_frames"].get<int>();
    const int n_persons = header["n_persons"].get<int>();
    const int dim = header["joint_count"].get<int>();
    require(n_persons == 1, "container: '" + path + "' is not a feature file");
    const auto payload = read_payload(in, path, static_cast<size_t>(n_frames) * dim);
    Tensor out(n_frames, dim);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<double>(payload[i]);
    if (fps_out) *fps_out = header["fps"].get<double>();
    return out;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.is_open(), "file_hash_hex: cannot open '" + path + "'");
    uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (in.eof()) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

}  // namespace dualflow
