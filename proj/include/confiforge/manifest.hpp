#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

#include "confiforge/errors.hpp"
#include "confiforge/model_client.hpp"

namespace confiforge {

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string hash_hex(std::uint64_t h) {
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

inline std::string hash_string(const std::string& data) {
    return hash_hex(detail::fnv1a64(data));
}

inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for hashing");
    std::ostringstream buf;
    buf << in.rdbuf();
    return hash_string(buf.str());
}

/// Per-stage provenance record: inputs and outputs with content hashes plus
/// the resolved configuration, so any artifact can be traced back through the
/// chain of manifests that produced it.
struct Manifest {
    std::string stage;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::string> inputs;   // path -> content hash
    std::map<std::string, std::string> outputs;  // path -> content hash

    void add_input(const std::string& path) { inputs[path] = hash_file(path); }
    void add_output(const std::string& path) { outputs[path] = hash_file(path); }

    std::string config_hash() const { return hash_string(config.dump()); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["stage"] = stage;
        j["tool_version"] = kToolVersion;
        j["created_at"] = timestamp();
        j["seed"] = seed;
        j["config"] = config;
        j["config_hash"] = config_hash();
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        return j;
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path + " for writing");
        out << to_json().dump(2) << "\n";
    }

    static nlohmann::json load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw MalformedRecordError(0, std::string("manifest: ") + e.what());
        }
        return j;
    }

private:
    static std::string timestamp() {
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }
};

/// Checks that every input recorded by `later` that appears among `earlier`'s
/// outputs carries the same content hash (the chain is unbroken).
inline bool manifests_chain(const nlohmann::json& earlier, const nlohmann::json& later) {
    if (!earlier.contains("outputs") || !later.contains("inputs")) return false;
    bool linked = false;
    for (const auto& [path, hash] : later["inputs"].items()) {
        if (earlier["outputs"].contains(path)) {
            if (earlier["outputs"][path] != hash) return false;
            linked = true;
        }
    }
    return linked;
}

}  // namespace confiforge
