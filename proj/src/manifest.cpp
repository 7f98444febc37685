#include "mossda/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace mossda {

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream hex;
    hex << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
    return hex.str();
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

std::string hash_inputs(const std::string& resolved_config_json,
                        const std::vector<std::filesystem::path>& files) {
    std::string all = resolved_config_json;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) continue;  // absent inputs simply do not contribute
        std::ostringstream buf;
        buf << in.rdbuf();
        all += "\0" + f.filename().string() + "\0" + buf.str();
    }
    return sha256_hex(all);
}

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    nlohmann::ordered_json j;
    j["command"] = manifest.command;
    j["config_path"] = manifest.config_path;
    j["resolved_config"] = manifest.resolved_config_json.empty()
                               ? nlohmann::ordered_json::object()
                               : nlohmann::ordered_json::parse(manifest.resolved_config_json);
    j["seed"] = manifest.seed;
    j["inputs_hash"] = manifest.inputs_hash;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    j["outcome"] = manifest.outcome;
    std::ofstream out(out_dir / "run_manifest.json");
    if (!out) throw std::runtime_error("cannot write run manifest in " + out_dir.string());
    out << j.dump(2) << "\n";
}

}  // namespace mossda
