#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mossda/rng.hpp"
#include "mossda/tensor.hpp"

namespace mossda {

using Tensor3f = Tensor3<float>;

// One domain: train/test splits plus per-channel normalization statistics
// computed on its own train split.
struct DomainDataset {
    std::string name;
    int channels = 0;
    int seq_len = 0;
    int num_classes = 0;
    Tensor3f x_train;
    std::vector<int> y_train;
    Tensor3f x_test;
    std::vector<int> y_test;
    std::vector<double> channel_mean;
    std::vector<double> channel_std;

    int n_train() const { return x_train.n; }
    int n_test() const { return x_test.n; }

    void compute_normalization();
    void validate() const;

    // Rows of the chosen split, z-normalized with this domain's train stats.
    Tensor3f normalized_rows(const std::vector<int>& indices, bool from_test = false) const;
    Tensor3f normalized_split(bool test) const;
};

// Seeded labeled/unlabeled split of the target training set at unlabeled
// ratio u. Stratified per class with a floor of one labeled sample.
struct TargetPartition {
    std::vector<int> labeled_idx;
    std::vector<int> unlabeled_idx;
    double u = 0.0;
    std::uint64_t seed = 0;
};

// Equal-size source/target minibatch; the target side splits into labeled
// and unlabeled rows.
struct PairedBatch {
    Tensor3f src_x;
    Eigen::VectorXi src_y;
    Tensor3f trg_lab_x;
    Eigen::VectorXi trg_lab_y;
    Tensor3f trg_unl_x;
};

// Parameters of the sinusoid-plus-noise benchmark generator. Each class c
// emits A_dom[ch] * sin(2*pi*f_c*t/T + phi_c + phi_dom) + N(0, sigma_dom^2)
// on every channel; the two domains share label space and class frequencies
// and differ only in (amplitude, phase offset, noise).
struct DomainShift {
    std::vector<double> amplitude;  // per channel; size 1 broadcasts
    double phase_offset = 0.0;      // radians
    double noise_sigma = 0.1;
};

struct SyntheticSpec {
    int num_classes = 4;
    int channels = 3;
    int seq_len = 64;
    int train_per_class = 50;
    int test_per_class = 50;
    std::uint64_t seed = 0;
    std::vector<double> class_freq;   // cycles over the window; defaults to distinct values
    std::vector<double> class_phase;  // phi_c; defaults to evenly spaced offsets
    DomainShift source;
    DomainShift target;

    void validate() const;
};

DomainDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const DomainDataset& ds, const std::filesystem::path& dir);

TargetPartition apply_unlabeled_ratio(const DomainDataset& dataset, double u, std::uint64_t seed);

std::pair<DomainDataset, DomainDataset> generate_synthetic(const SyntheticSpec& spec);

// Deterministic paired-batch stream: per epoch ceil(max(Ns, Nt)/B) batches,
// source rows covered without replacement (topped up when the count is not a
// multiple of B), B_l = max(1, ceil(B*(1-u))) labeled target rows oversampled
// with replacement, and B - B_l unlabeled rows.
class BatchPlan {
public:
    BatchPlan(const DomainDataset& src, const DomainDataset& trg, const TargetPartition& part,
              int batch_size, std::uint64_t seed);

    int batches_per_epoch() const { return batches_per_epoch_; }
    int labeled_per_batch() const { return labeled_per_batch_; }

    struct EpochIndices {
        std::vector<std::vector<int>> src;
        std::vector<std::vector<int>> trg_lab;
        std::vector<std::vector<int>> trg_unl;
    };

    EpochIndices epoch_indices(int epoch) const;
    std::vector<PairedBatch> epoch(int epoch) const;

private:
    const DomainDataset* src_;
    const DomainDataset* trg_;
    TargetPartition part_;
    int batch_size_;
    std::uint64_t seed_;
    int batches_per_epoch_ = 0;
    int labeled_per_batch_ = 0;
};

}  // namespace mossda
