#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mossda/checkpoint.hpp"
#include "mossda/datapipe.hpp"
#include "mossda/losses.hpp"
#include "mossda/metrics.hpp"
#include "mossda/model.hpp"
#include "mossda/optim.hpp"

namespace mossda {

// two_stage is the full method; no_mmd / no_ctr / no_mixup drop one
// ingredient while keeping the two-stage protocol (no_ctr also disables
// mixup, which only exists to feed the contrastive term); joint optimizes
// everything in a single loop; source_only ignores the target domain.
enum class TrainMode { two_stage, joint, no_mmd, no_ctr, no_mixup, source_only };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    std::string backbone = "cnn";  // cnn | resnet18 | tcn
    int feature_dim = 128;
    int proj_dim = 64;
    LossWeights weights;
    KernelSpec kernel;
    OptimizerConfig optimizer;
    int batch_size = 32;
    int epochs_stage1 = 40;
    int epochs_stage2 = 40;
    double u = 0.9;
    TrainMode mode = TrainMode::two_stage;
    std::uint64_t seed = 0;
    bool ema_enabled = true;  // test hook; the method always applies EMA
    std::string dataset_name;  // grouping label for summaries; defaults to the scenario

    void validate() const;
    BackboneKind backbone_kind() const;
};

struct StepDiagnostics {
    std::int64_t step = 0;
    int stage = 0;  // 1, 2, or 0 for single-loop modes
    double l_mmd = 0.0;
    double l_ctr = 0.0;
    double l_ce_s = 0.0;
    double l_ce_t = 0.0;
    int anchors_without_positives = 0;
    double grad_backbone = 0.0;
    double grad_online = 0.0;
    double grad_classifier = 0.0;
};

// Non-finite loss detected; training state at the failing step rides along.
struct TrainingAbort : std::runtime_error {
    TrainingAbort(const std::string& what, StepDiagnostics snapshot_)
        : std::runtime_error(what), snapshot(snapshot_) {}
    StepDiagnostics snapshot;
};

// Stage 1: shape the feature space with the MMD and contrastive objectives.
// Optimizes the backbone and online head only; the momentum head moves by
// EMA after each step and the classifier is untouched.
void train_stage1(ModelState& state, const DomainDataset& src, const DomainDataset& trg,
                  const TargetPartition& part, const TrainConfig& config,
                  std::vector<StepDiagnostics>& diagnostics);

// Stage 2: linear probe on frozen features. The backbone runs in evaluation
// mode; only classifier parameters receive updates.
void train_stage2(ModelState& state, const DomainDataset& src, const DomainDataset& trg,
                  const TargetPartition& part, const TrainConfig& config,
                  std::vector<StepDiagnostics>& diagnostics);

// Single loop over the combined objective; backbone, online head, and
// classifier all update each step.
void train_joint(ModelState& state, const DomainDataset& src, const DomainDataset& trg,
                 const TargetPartition& part, const TrainConfig& config,
                 std::vector<StepDiagnostics>& diagnostics);

// Supervised training on the source domain only; the baseline every
// adaptation run is measured against.
void train_source_only(ModelState& state, const DomainDataset& src, const TrainConfig& config,
                       std::vector<StepDiagnostics>& diagnostics);

void write_diagnostics_csv(const std::vector<StepDiagnostics>& diagnostics,
                           const std::filesystem::path& path);

// Loads both domains, applies the unlabeled ratio, trains in the configured
// mode, evaluates on the target test split, and writes metrics.json,
// diagnostics.csv, checkpoint, and the feature export into out_dir.
// resolved_config_json is echoed into metrics.json and hashed for provenance.
ScenarioResult run_experiment(const TrainConfig& config, const std::filesystem::path& src_path,
                              const std::filesystem::path& trg_path,
                              const std::filesystem::path& out_dir,
                              const std::string& resolved_config_json);

// Same, but on datasets already in memory (the test path).
ScenarioResult run_experiment_on(const TrainConfig& config, const DomainDataset& src,
                                 const DomainDataset& trg, const std::filesystem::path& out_dir,
                                 const std::string& resolved_config_json);

}  // namespace mossda
