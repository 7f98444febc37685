#include "mossda/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mossda {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return j;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument(context + ": unknown key '" + it.key() + "'");
}

std::vector<double> amplitude_from(const json& j) {
    if (j.is_number()) return {j.get<double>()};
    return j.get<std::vector<double>>();
}

DomainShift shift_from(const json& j, const std::string& context) {
    reject_unknown_keys(j, {"amplitude", "phase", "noise"}, context);
    DomainShift s;
    if (j.contains("amplitude")) s.amplitude = amplitude_from(j.at("amplitude"));
    s.phase_offset = j.value("phase", 0.0);
    s.noise_sigma = j.value("noise", 0.1);
    return s;
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    reject_unknown_keys(j,
                        {"backbone", "feature_dim", "proj_dim", "tau", "m", "alpha", "lambda_mmd",
                         "lambda_ctr", "kernel", "rbf_gamma", "u", "B", "epochs_stage1",
                         "epochs_stage2", "lr", "weight_decay", "optimizer", "mode", "seed",
                         "dataset"},
                        "config");

    TrainConfig c;
    c.backbone = j.value("backbone", std::string("cnn"));
    c.feature_dim = j.value("feature_dim", 128);
    c.proj_dim = j.value("proj_dim", 64);
    c.weights.tau = j.value("tau", 0.5);
    c.weights.momentum = j.value("m", 0.999);
    c.weights.alpha = j.value("alpha", 1.0);
    c.weights.lambda_mmd = j.value("lambda_mmd", 0.5);
    c.weights.lambda_ctr = j.value("lambda_ctr", 0.5);

    const std::string kernel = j.value("kernel", std::string("linear"));
    if (kernel == "linear") {
        c.kernel.kind = KernelKind::linear;
    } else if (kernel == "rbf") {
        c.kernel.kind = KernelKind::rbf;
        if (j.contains("rbf_gamma") && !j.at("rbf_gamma").is_string())
            c.kernel.rbf_gamma = j.at("rbf_gamma").get<double>();
        // a string value (or no key) requests the median heuristic
    } else {
        throw std::invalid_argument("config: unknown kernel '" + kernel + "'");
    }

    c.u = j.value("u", 0.9);
    c.batch_size = j.value("B", 32);
    c.epochs_stage1 = j.value("epochs_stage1", 40);
    c.epochs_stage2 = j.value("epochs_stage2", 40);
    c.optimizer.lr = j.value("lr", 1e-3);
    c.optimizer.weight_decay = j.value("weight_decay", 1e-4);
    const std::string opt = j.value("optimizer", std::string("adam"));
    if (opt == "adam") {
        c.optimizer.kind = OptimizerKind::adam;
    } else if (opt == "sgd") {
        c.optimizer.kind = OptimizerKind::sgd;
    } else {
        throw std::invalid_argument("config: unknown optimizer '" + opt + "'");
    }
    c.mode = train_mode_from_string(j.value("mode", std::string("two_stage")));
    c.seed = j.value("seed", std::uint64_t{0});
    c.dataset_name = j.value("dataset", std::string());
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    return parse_train_config(read_json_file(path).dump());
}

std::string resolved_config_json(const TrainConfig& config) {
    ordered_json j;
    j["backbone"] = config.backbone;
    j["feature_dim"] = config.feature_dim;
    j["proj_dim"] = config.proj_dim;
    j["tau"] = config.weights.tau;
    j["m"] = config.weights.momentum;
    j["alpha"] = config.weights.alpha;
    j["lambda_mmd"] = config.weights.lambda_mmd;
    j["lambda_ctr"] = config.weights.lambda_ctr;
    j["kernel"] = config.kernel.kind == KernelKind::linear ? "linear" : "rbf";
    if (config.kernel.kind == KernelKind::rbf) {
        if (config.kernel.rbf_gamma.has_value())
            j["rbf_gamma"] = *config.kernel.rbf_gamma;
        else
            j["rbf_gamma"] = "median-heuristic";
    }
    j["u"] = config.u;
    j["B"] = config.batch_size;
    j["epochs_stage1"] = config.epochs_stage1;
    j["epochs_stage2"] = config.epochs_stage2;
    j["lr"] = config.optimizer.lr;
    j["weight_decay"] = config.optimizer.weight_decay;
    j["optimizer"] = config.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd";
    j["mode"] = to_string(config.mode);
    j["seed"] = config.seed;
    if (!config.dataset_name.empty()) j["dataset"] = config.dataset_name;
    return j.dump();
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("synthetic spec: ") + e.what());
    }
    reject_unknown_keys(j,
                        {"classes", "channels", "seq_len", "train_per_class", "test_per_class",
                         "seed", "class_freq", "class_phase", "source", "target"},
                        "synthetic spec");
    SyntheticSpec spec;
    spec.num_classes = j.value("classes", 4);
    spec.channels = j.value("channels", 3);
    spec.seq_len = j.value("seq_len", 64);
    spec.train_per_class = j.value("train_per_class", 50);
    spec.test_per_class = j.value("test_per_class", 50);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("class_freq")) spec.class_freq = j.at("class_freq").get<std::vector<double>>();
    if (j.contains("class_phase"))
        spec.class_phase = j.at("class_phase").get<std::vector<double>>();
    if (j.contains("source")) spec.source = shift_from(j.at("source"), "synthetic spec source");
    if (j.contains("target")) spec.target = shift_from(j.at("target"), "synthetic spec target");
    spec.validate();
    return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
    return parse_synthetic_spec(read_json_file(path).dump());
}

}  // namespace mossda
