#include "mossda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need byte swaps");

namespace mossda {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'S', 'D', 'A', 'C', 'K', 'P', 'T'};

const char* kind_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::cnn: return "cnn";
        case BackboneKind::resnet18: return "resnet18";
        case BackboneKind::tcn: return "tcn";
    }
    return "cnn";
}

BackboneKind kind_from_name(const std::string& s) {
    if (s == "cnn") return BackboneKind::cnn;
    if (s == "resnet18") return BackboneKind::resnet18;
    if (s == "tcn") return BackboneKind::tcn;
    throw std::runtime_error("checkpoint: unknown backbone kind '" + s + "'");
}

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void put_tensor(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                const float* data, std::size_t count) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(float)));
}

struct RawTensor {
    std::vector<int> shape;
    std::vector<float> data;
};

RawTensor get_tensor(std::istream& in, std::string& name) {
    const std::uint32_t name_len = get_u32(in);
    name.resize(name_len);
    in.read(name.data(), name_len);
    RawTensor t;
    const std::uint32_t ndim = get_u32(in);
    std::size_t count = 1;
    t.shape.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.shape[i] = static_cast<int>(get_u32(in));
        count *= static_cast<std::size_t>(t.shape[i]);
    }
    t.data.resize(count);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
    return t;
}

}  // namespace

void save_checkpoint(ModelState& state, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));

    json manifest;
    manifest["format_version"] = 1;
    manifest["backbone"] = {{"kind", kind_name(state.spec().kind)},
                            {"in_channels", state.spec().in_channels},
                            {"seq_len", state.spec().seq_len},
                            {"feature_dim", state.spec().feature_dim}};
    manifest["proj_dim"] = state.proj_dim();
    manifest["num_classes"] = state.num_classes();
    manifest["step"] = state.step();
    manifest["seed"] = state.seed();
    json adam_steps = json::object();
    for (const auto& [name, entry] : state.optimizer_state().entries) adam_steps[name] = entry.t;
    manifest["adam_steps"] = adam_steps;
    const std::string manifest_str = manifest.dump();
    put_u32(out, static_cast<std::uint32_t>(manifest_str.size()));
    out.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));

    auto tensors = state.all_tensors();
    std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
    for (const auto& [name, entry] : state.optimizer_state().entries) count += 2;
    put_u32(out, count);
    for (auto& t : tensors) put_tensor(out, t.name, t.shape, t.value, t.count);
    for (const auto& [name, entry] : state.optimizer_state().entries) {
        const std::vector<int> shape = {static_cast<int>(entry.m.size())};
        put_tensor(out, "opt.m." + name, shape, entry.m.data(), entry.m.size());
        put_tensor(out, "opt.v." + name, shape, entry.v.data(), entry.v.size());
    }
    if (!out) throw std::runtime_error("short write: " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing file: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());

    const std::uint32_t manifest_len = get_u32(in);
    std::string manifest_str(manifest_len, '\0');
    in.read(manifest_str.data(), manifest_len);
    json manifest = json::parse(manifest_str);
    if (manifest.value("format_version", 0) != 1)
        throw std::runtime_error("checkpoint: unsupported format_version");

    BackboneSpec spec;
    spec.kind = kind_from_name(manifest.at("backbone").at("kind").get<std::string>());
    spec.in_channels = manifest.at("backbone").at("in_channels").get<int>();
    spec.seq_len = manifest.at("backbone").at("seq_len").get<int>();
    spec.feature_dim = manifest.at("backbone").at("feature_dim").get<int>();

    ModelState state = ModelState::create(spec, manifest.at("num_classes").get<int>(),
                                          manifest.at("proj_dim").get<int>(),
                                          manifest.at("seed").get<std::uint64_t>());
    state.set_step(manifest.at("step").get<std::int64_t>());

    std::map<std::string, RawTensor> raw;
    const std::uint32_t count = get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name;
        RawTensor t = get_tensor(in, name);
        raw.emplace(std::move(name), std::move(t));
    }

    for (auto& ref : state.all_tensors()) {
        const auto it = raw.find(ref.name);
        if (it == raw.end())
            throw std::runtime_error("checkpoint: missing tensor '" + ref.name + "'");
        if (it->second.data.size() != ref.count)
            throw std::runtime_error("checkpoint: size mismatch for tensor '" + ref.name + "'");
        std::memcpy(ref.value, it->second.data.data(), ref.count * sizeof(float));
    }

    const json& adam_steps = manifest.at("adam_steps");
    for (auto it = adam_steps.begin(); it != adam_steps.end(); ++it) {
        AdamEntry entry;
        entry.t = it.value().get<std::int64_t>();
        const auto m_it = raw.find("opt.m." + it.key());
        const auto v_it = raw.find("opt.v." + it.key());
        if (m_it == raw.end() || v_it == raw.end())
            throw std::runtime_error("checkpoint: missing optimizer moments for '" + it.key() + "'");
        entry.m = m_it->second.data;
        entry.v = v_it->second.data;
        state.optimizer_state().entries.emplace(it.key(), std::move(entry));
    }
    return state;
}

}  // namespace mossda
