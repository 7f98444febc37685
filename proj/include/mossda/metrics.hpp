#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mossda/datapipe.hpp"
#include "mossda/model.hpp"

namespace mossda {

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Metrics and provenance of one scenario run.
struct ScenarioResult {
    std::string scenario;  // "src->trg"
    double u = 0.0;
    std::string backbone;
    std::string mode;
    std::string dataset;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassScores> per_class;
    std::vector<std::vector<int>> confusion;  // [truth][pred]
    std::uint64_t seed = 0;
    std::string config_hash;
};

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& pred,
                                               const std::vector<int>& truth, int num_classes);

std::vector<ClassScores> per_class_scores(const std::vector<int>& pred,
                                          const std::vector<int>& truth, int num_classes);

// Unweighted mean of per-class F1; a class with precision + recall = 0
// contributes 0.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int num_classes);

struct GroupSummary {
    std::string dataset;
    double u = 0.0;
    std::string backbone;
    std::string mode;
    int count = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    double mean_f1 = 0.0;
    double std_f1 = 0.0;
};

// Mean and population standard deviation of accuracy and macro-F1 per
// (dataset, u, backbone, mode) group, in first-appearance order.
std::vector<GroupSummary> aggregate_scenarios(const std::vector<ScenarioResult>& results);

void write_summary_csv(const std::vector<GroupSummary>& groups,
                       const std::filesystem::path& path);

// Predicted labels for the test split of a dataset, evaluation mode.
std::vector<int> predict_test(ModelState& state, const DomainDataset& dataset);

// Target-test backbone features plus labels, for external embedding tools.
void export_features(ModelState& state, const DomainDataset& dataset,
                     const std::filesystem::path& out_dir);

}  // namespace mossda
