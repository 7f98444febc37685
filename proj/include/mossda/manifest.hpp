#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mossda {

std::string sha256_hex(const std::string& data);

// Run manifest: resolved config, input hashes, timestamps, and outcome.
// Timestamps live here and only here so every other artifact is
// byte-reproducible.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::string resolved_config_json;
    std::uint64_t seed = 0;
    std::string inputs_hash;  // content hash over resolved config + dataset manifests
    std::string started_at;
    std::string finished_at;
    std::string outcome;  // "ok" or an error description
};

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& out_dir);

std::string now_iso8601();

// Content hash over the resolved config plus any input files that define the
// run (dataset manifests, spec files).
std::string hash_inputs(const std::string& resolved_config_json,
                        const std::vector<std::filesystem::path>& files);

}  // namespace mossda
