// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#include "dualflow/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace {

using nlohmann::json;

std::string fnv_hex(const std::vector<float>& payload) {
    uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    for (size_t i = 0; i < payload.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

}  // namespace

CheckpointInfo save_checkpoint(const std::string& prefix, const ParamStore& store,
                               const std::map<std::string, std::string>& config_echo) {
    std::vector<float> payload;
    payload.reserve(store.total_values());
    json params = json::array();
    size_t offset = 0;
    for (const auto& p : store.all()) {
        params.push_back({{"name", p->name},
                          {"rows", p->value.rows},
                          {"cols", p->value.cols},
                          {"offset", offset}});
        for (double v : p->value.data) payload.push_back(static_cast<float>(v));
        offset += p->value.size();
    }

    CheckpointInfo info;
    info.checkpoint_id = fnv_hex(payload);
    info.config_echo = config_echo;

    json manifest;
    manifest["checkpoint_id"] = info.checkpoint_id;
    manifest["total_floats"] = payload.size();
    manifest["params"] = params;
    manifest["config"] = config_echo;

    std::ofstream mf(prefix + ".json");
    require(mf.is_open(), "save_checkpoint: cannot write '" + prefix + ".json'");
    mf << manifest.dump(2) << "\n";
    require(mf.good(), "save_checkpoint: manifest write failed");

    std::ofstream pf(prefix + ".bin", std::ios::binary);
    require(pf.is_open(), "save_checkpoint: cannot write '" + prefix + ".bin'");
    pf.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    require(pf.good(), "save_checkpoint: payload write failed");
    return info;
}

CheckpointInfo load_checkpoint(const std::string& prefix, ParamStore& store) {
    std::ifstream mf(prefix + ".json");
    require(mf.is_open(), "load_checkpoint: cannot open '" + prefix + ".json'");
    json manifest = json::parse(mf, nullptr, false);
    require(!manifest.is_discarded(), "load_checkpoint: malformed manifest");

    std::ifstream pf(prefix + ".bin", std::ios::binary);
    require(pf.is_open(), "load_checkpoint: cannot open '" + prefix + ".bin'");
    std::vector<char> bytes(std::istreambuf_iterator<char>(pf), {});
    const size_t total = manifest.at("total_floats").get<size_t>();
    require(bytes.size() == total * sizeof(float),
            "load_checkpoint: payload size mismatch for '" + prefix + ".bin'");
    std::vector<float> payload(total);
    std::memcpy(payload.data(), bytes.data(), bytes.size());

    for (const auto& entry : manifest.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        Parameter* p = store.find(name);
        require(p != nullptr, "load_checkpoint: parameter '" + name + "' not in this model");
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        require(p->value.rows == rows && p->value.cols == cols,
                "load_checkpoint: shape mismatch for '" + name + "'");
        const size_t offset = entry.at("offset").get<size_t>();
        require(offset + p->value.size() <= payload.size(),
                "load_checkpoint: offset out of range for '" + name + "'");
        for (size_t i = 0; i < p->value.size(); ++i)
            p->value.data[i] = static_cast<double>(payload[offset + i]);
    }

    CheckpointInfo info;
    info.checkpoint_id = manifest.at("checkpoint_id").get<std::string>();
    if (manifest.contains("config"))
        info.config_echo =
            manifest.at("config").get<std::map<std::string, std::string>>();
    return info;
}

CheckpointInfo read_checkpoint_info(const std::string& prefix) {
    std::ifstream mf(prefix + ".json");
    require(mf.is_open(), "read_checkpoint_info: cannot open '" + prefix + ".json'");
    json manifest = json::parse(mf, nullptr, false);
    require(!manifest.is_discarded(), "read_checkpoint_info: malformed manifest");
    CheckpointInfo info;
    info.checkpoint_id = manifest.at("checkpoint_id").get<std::string>();
    if (manifest.contains("config"))
        info.config_echo =
            manifest.at("config").get<std::map<std::string, std::string>>();
    return info;
}

}  // namespace dualflow
