#pragma once

#include <map>
#include <string>
#include <vector>

namespace biasguard {

// Provenance sidecar written next to every output artifact as
// <artifact>.manifest.json. Re-running the recorded command reproduces the
// artifact bytes; the manifest itself carries wall-clock timestamps and is
// not part of the determinism contract.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;  // fully resolved settings
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_at;   // ISO 8601 UTC
    std::string finished_at;
    std::string engine_version;
};

std::string manifest_path_for(const std::string& artifact_path);
void write_manifest(const RunManifest& manifest, const std::string& artifact_path);
RunManifest read_manifest(const std::string& manifest_path);

std::string iso8601_now();

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace biasguard
