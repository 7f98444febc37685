#pragma once

#include <filesystem>
#include <string>

#include "mossda/datapipe.hpp"
#include "mossda/trainer.hpp"

namespace mossda {

// Flat JSON config with every hyperparameter under its conventional name
// (tau, m, alpha, lambda_mmd, lambda_ctr, u, B, ...). Omitted keys fall back
// to the method defaults; unknown keys are rejected.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);

// Fully resolved echo of a config, defaults materialized, stable key order.
std::string resolved_config_json(const TrainConfig& config);

SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

}  // namespace mossda
