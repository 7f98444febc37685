#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace mossda::cli {

// Exit codes shared by every command: 0 success, 1 runtime failure,
// 2 validation failure.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kValidationError = 2;

int cmd_generate(const std::filesystem::path& spec_file, const std::filesystem::path& out_src,
                 const std::filesystem::path& out_trg);

struct TrainArgs {
    std::filesystem::path config_file;
    std::filesystem::path src_dir;
    std::filesystem::path trg_dir;
    std::filesystem::path out_dir;
    std::optional<double> u;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
};

int cmd_train(const TrainArgs& args);

int cmd_ablate(const TrainArgs& args);

int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
             const std::filesystem::path& out_dir);

int cmd_export_features(const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset_dir,
                        const std::filesystem::path& out_dir);

}  // namespace mossda::cli
