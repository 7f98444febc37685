#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mossda/rng.hpp"
#include "mossda/tensor.hpp"

namespace mossda {

enum class KernelKind { linear, rbf };

// Kernel used by the squared-MMD estimator. An unset rbf_gamma requests the
// median heuristic: gamma = 1 / (2 * median^2) of pairwise Euclidean
// distances over the pooled batch.
struct KernelSpec {
    KernelKind kind = KernelKind::linear;
    std::optional<double> rbf_gamma;  // nullopt = median heuristic

    void validate() const {
        if (kind == KernelKind::rbf && rbf_gamma.has_value())
            require(*rbf_gamma > 0.0, "KernelSpec: rbf_gamma must be positive");
    }
};

struct LossWeights {
    double lambda_mmd = 0.5;
    double lambda_ctr = 0.5;
    double tau = 0.5;        // contrastive temperature
    double alpha = 1.0;      // Beta concentration for mixup
    double momentum = 0.999; // EMA coefficient m

    void validate() const {
        require(lambda_mmd >= 0.0 && lambda_ctr >= 0.0, "LossWeights: lambdas must be nonnegative");
        require(tau > 0.0, "LossWeights: tau must be positive");
        require(alpha > 0.0, "LossWeights: alpha must be positive");
        require(momentum >= 0.0 && momentum < 1.0, "LossWeights: momentum must lie in [0, 1)");
    }
};

enum class Domain : std::uint8_t { source, target };
enum class Origin : std::uint8_t { real, mixed };

// A batch of embedding rows tagged with label, domain of origin, and whether
// the row is a real sample or a mixup interpolation. Label -1 = unlabeled.
struct LatentBatch {
    Eigen::MatrixXd embeddings;
    Eigen::VectorXi labels;
    std::vector<Domain> domain;
    std::vector<Origin> origin;

    int rows() const { return static_cast<int>(embeddings.rows()); }
    int dim() const { return static_cast<int>(embeddings.cols()); }

    void validate() const {
        const int n = rows();
        require(n >= 1, "LatentBatch: at least one row required");
        require(labels.size() == n && static_cast<int>(domain.size()) == n &&
                    static_cast<int>(origin.size()) == n,
                "LatentBatch: per-row metadata lengths must match embedding rows");
        require(embeddings.allFinite(), "LatentBatch: embeddings must be finite");
        for (int i = 0; i < n; ++i)
            if (origin[i] == Origin::mixed)
                require(labels[i] >= 0, "LatentBatch: mixed rows must be labeled");
    }

    bool all_labeled() const {
        for (int i = 0; i < rows(); ++i)
            if (labels[i] < 0) return false;
        return true;
    }

    static LatentBatch concat(const LatentBatch& a, const LatentBatch& b) {
        LatentBatch out;
        out.embeddings.resize(a.rows() + b.rows(), a.dim());
        out.embeddings << a.embeddings, b.embeddings;
        out.labels.resize(a.rows() + b.rows());
        out.labels << a.labels, b.labels;
        out.domain = a.domain;
        out.domain.insert(out.domain.end(), b.domain.begin(), b.domain.end());
        out.origin = a.origin;
        out.origin.insert(out.origin.end(), b.origin.begin(), b.origin.end());
        return out;
    }
};

namespace detail {

inline double kernel_eval(KernelKind kind, double gamma, const Eigen::RowVectorXd& x,
                          const Eigen::RowVectorXd& y) {
    if (kind == KernelKind::linear) return x.dot(y);
    return std::exp(-gamma * (x - y).squaredNorm());
}

}  // namespace detail

// Bandwidth for the RBF kernel when the spec asks for the median heuristic:
// gamma = 1 / (2 * median^2) over pairwise distances of the pooled rows.
inline double median_heuristic_gamma(const Eigen::MatrixXd& z_src, const Eigen::MatrixXd& z_trg) {
    Eigen::MatrixXd pooled(z_src.rows() + z_trg.rows(), z_src.cols());
    pooled << z_src, z_trg;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(pooled.rows()) * (pooled.rows() - 1) / 2);
    for (int i = 0; i < pooled.rows(); ++i)
        for (int j = i + 1; j < pooled.rows(); ++j)
            dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    if (dists.empty()) return 1.0;
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double median = dists[dists.size() / 2];
    if (median < 1e-12) return 1.0;  // degenerate batch, all rows identical
    return 1.0 / (2.0 * median * median);
}

inline double resolve_gamma(const KernelSpec& kernel, const Eigen::MatrixXd& z_src,
                            const Eigen::MatrixXd& z_trg) {
    if (kernel.kind != KernelKind::rbf) return 0.0;
    return kernel.rbf_gamma.has_value() ? *kernel.rbf_gamma
                                        : median_heuristic_gamma(z_src, z_trg);
}

// Squared empirical MMD, biased V-statistic (i = j terms included):
//   (1/Bs^2) sum k(s,s') - (2/(Bs*Bt)) sum k(s,t) + (1/Bt^2) sum k(t,t').
// For the linear kernel this collapses to |mean(src) - mean(trg)|^2.
inline double mmd_loss(const Eigen::MatrixXd& z_src, const Eigen::MatrixXd& z_trg,
                       const KernelSpec& kernel) {
    require(z_src.rows() >= 1 && z_trg.rows() >= 1, "mmd_loss: batches must be nonempty");
    require(z_src.cols() == z_trg.cols(), "mmd_loss: embedding dimensions must match");
    kernel.validate();
    const double gamma = resolve_gamma(kernel, z_src, z_trg);
    const int bs = static_cast<int>(z_src.rows());
    const int bt = static_cast<int>(z_trg.rows());

    if (kernel.kind == KernelKind::linear) {
        const Eigen::RowVectorXd mu_s = z_src.colwise().mean();
        const Eigen::RowVectorXd mu_t = z_trg.colwise().mean();
        return (mu_s - mu_t).squaredNorm();
    }

    double kss = 0.0, ktt = 0.0, kst = 0.0;
    for (int i = 0; i < bs; ++i)
        for (int j = 0; j < bs; ++j)
            kss += detail::kernel_eval(kernel.kind, gamma, z_src.row(i), z_src.row(j));
    for (int i = 0; i < bt; ++i)
        for (int j = 0; j < bt; ++j)
            ktt += detail::kernel_eval(kernel.kind, gamma, z_trg.row(i), z_trg.row(j));
    for (int i = 0; i < bs; ++i)
        for (int j = 0; j < bt; ++j)
            kst += detail::kernel_eval(kernel.kind, gamma, z_src.row(i), z_trg.row(j));
    return kss / (double(bs) * bs) - 2.0 * kst / (double(bs) * bt) + ktt / (double(bt) * bt);
}

struct MmdGradResult {
    double value = 0.0;
    Eigen::MatrixXd d_src;
    Eigen::MatrixXd d_trg;
};

// Gradient of the V-statistic w.r.t. both batches. The median-heuristic
// bandwidth, when active, is treated as a constant of the batch.
inline MmdGradResult mmd_loss_grad(const Eigen::MatrixXd& z_src, const Eigen::MatrixXd& z_trg,
                                   const KernelSpec& kernel) {
    require(z_src.rows() >= 1 && z_trg.rows() >= 1, "mmd_loss: batches must be nonempty");
    require(z_src.cols() == z_trg.cols(), "mmd_loss: embedding dimensions must match");
    kernel.validate();
    MmdGradResult out;
    const int bs = static_cast<int>(z_src.rows());
    const int bt = static_cast<int>(z_trg.rows());
    out.d_src = Eigen::MatrixXd::Zero(bs, z_src.cols());
    out.d_trg = Eigen::MatrixXd::Zero(bt, z_trg.cols());

    if (kernel.kind == KernelKind::linear) {
        const Eigen::RowVectorXd mu_s = z_src.colwise().mean();
        const Eigen::RowVectorXd mu_t = z_trg.colwise().mean();
        const Eigen::RowVectorXd diff = mu_s - mu_t;
        out.value = diff.squaredNorm();
        for (int i = 0; i < bs; ++i) out.d_src.row(i) = 2.0 / bs * diff;
        for (int i = 0; i < bt; ++i) out.d_trg.row(i) = -2.0 / bt * diff;
        return out;
    }

    const double gamma = resolve_gamma(kernel, z_src, z_trg);
    double kss = 0.0, ktt = 0.0, kst = 0.0;
    for (int i = 0; i < bs; ++i) {
        for (int j = 0; j < bs; ++j) {
            const Eigen::RowVectorXd d = z_src.row(i) - z_src.row(j);
            const double k = std::exp(-gamma * d.squaredNorm());
            kss += k;
            out.d_src.row(i) += (-2.0 * gamma / (double(bs) * bs)) * 2.0 * k * d;
        }
    }
    for (int i = 0; i < bt; ++i) {
        for (int j = 0; j < bt; ++j) {
            const Eigen::RowVectorXd d = z_trg.row(i) - z_trg.row(j);
            const double k = std::exp(-gamma * d.squaredNorm());
            ktt += k;
            out.d_trg.row(i) += (-2.0 * gamma / (double(bt) * bt)) * 2.0 * k * d;
        }
    }
    for (int i = 0; i < bs; ++i) {
        for (int j = 0; j < bt; ++j) {
            const Eigen::RowVectorXd d = z_src.row(i) - z_trg.row(j);
            const double k = std::exp(-gamma * d.squaredNorm());
            kst += k;
            const Eigen::RowVectorXd g = -2.0 * gamma * k * d;
            out.d_src.row(i) -= 2.0 / (double(bs) * bt) * g;
            out.d_trg.row(j) += 2.0 / (double(bs) * bt) * g;
        }
    }
    out.value = kss / (double(bs) * bs) - 2.0 * kst / (double(bs) * bt) + ktt / (double(bt) * bt);
    return out;
}

// Convex interpolation of two same-class embeddings.
inline Eigen::VectorXd mixup_pair(const Eigen::VectorXd& z_i, const Eigen::VectorXd& z_j,
                                  double lambda) {
    require(z_i.size() == z_j.size(), "mixup_pair: dimensions must match");
    require(lambda >= 0.0 && lambda <= 1.0, "mixup_pair: lambda must lie in [0, 1]");
    return lambda * z_i + (1.0 - lambda) * z_j;
}

// One mixed entry per labeled anchor row. The partner is drawn uniformly from
// the other rows of the same class (either domain); an anchor whose class has
// no other member pairs with itself. lambda ~ Beta(alpha, alpha) per anchor.
inline LatentBatch sample_mixup_batch(const LatentBatch& batch, double alpha, Rng& rng) {
    batch.validate();
    require(batch.all_labeled(), "sample_mixup_batch: all rows must be labeled");
    require(alpha > 0.0, "sample_mixup_batch: alpha must be positive");
    const int n = batch.rows();

    LatentBatch mixed;
    mixed.embeddings.resize(n, batch.dim());
    mixed.labels.resize(n);
    mixed.domain.resize(n);
    mixed.origin.assign(n, Origin::mixed);

    std::vector<int> candidates;
    for (int i = 0; i < n; ++i) {
        candidates.clear();
        for (int j = 0; j < n; ++j)
            if (j != i && batch.labels[j] == batch.labels[i]) candidates.push_back(j);
        const int partner =
            candidates.empty() ? i : candidates[rng.uniform_int(candidates.size())];
        const double lambda = rng.beta(alpha, alpha);
        mixed.embeddings.row(i) =
            lambda * batch.embeddings.row(i) + (1.0 - lambda) * batch.embeddings.row(partner);
        mixed.labels[i] = batch.labels[i];
        mixed.domain[i] = batch.domain[i];
    }
    return mixed;
}

struct ContrastiveResult {
    double value = 0.0;
    int anchors_without_positives = 0;
};

struct ContrastiveGradResult {
    double value = 0.0;
    Eigen::MatrixXd d_anchors;
    int anchors_without_positives = 0;
};

namespace detail {

constexpr double kNormFloor = 1e-8;

// Cosine-similarity matrix between anchor rows and key rows, with the row
// norms returned for the gradient pass. Norms are clamped below at 1e-8.
inline void cosine_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& k, Eigen::MatrixXd& sim,
                          Eigen::VectorXd& a_norm, Eigen::VectorXd& k_norm) {
    a_norm = a.rowwise().norm().cwiseMax(kNormFloor);
    k_norm = k.rowwise().norm().cwiseMax(kNormFloor);
    sim = (a * k.transpose()).array().colwise() / a_norm.array();
    sim = sim.array().rowwise() / k_norm.transpose().array();
}

}  // namespace detail

// Supervised contrastive loss with the positive sum inside the log:
//   L_i = -log( sum_{j in P(i)} exp(sim_ij / tau) / sum_{k in V(i)} exp(sim_ik / tau) )
// averaged over anchors with at least one positive key. When
// exclude_aligned_self is set, key j == i is treated as anchor i's own slot
// (the momentum view of the same row) and removed from both sums. Keys are
// constants; the gradient flows into anchors only.
inline ContrastiveGradResult supervised_contrastive_loss_grad(const LatentBatch& anchors,
                                                              const LatentBatch& keys, double tau,
                                                              bool exclude_aligned_self = true) {
    anchors.validate();
    keys.validate();
    require(anchors.all_labeled() && keys.all_labeled(),
            "supervised_contrastive_loss: every anchor and key row must be labeled");
    require(tau > 0.0, "supervised_contrastive_loss: tau must be positive");
    require(anchors.dim() == keys.dim(),
            "supervised_contrastive_loss: anchor/key dimensions must match");

    const int na = anchors.rows();
    const int nk = keys.rows();
    ContrastiveGradResult out;
    out.d_anchors = Eigen::MatrixXd::Zero(na, anchors.dim());

    Eigen::MatrixXd sim;
    Eigen::VectorXd a_norm, k_norm;
    detail::cosine_matrix(anchors.embeddings, keys.embeddings, sim, a_norm, k_norm);

    int counted = 0;
    double total = 0.0;
    Eigen::MatrixXd d_sim = Eigen::MatrixXd::Zero(na, nk);

    for (int i = 0; i < na; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        int positives = 0;
        for (int j = 0; j < nk; ++j) {
            if (exclude_aligned_self && j == i) continue;
            max_logit = std::max(max_logit, sim(i, j) / tau);
            if (keys.labels[j] == anchors.labels[i]) ++positives;
        }
        if (positives == 0) {  // log of an empty positive sum is undefined
            ++out.anchors_without_positives;
            continue;
        }
        double num = 0.0, den = 0.0;
        for (int j = 0; j < nk; ++j) {
            if (exclude_aligned_self && j == i) continue;
            const double e = std::exp(sim(i, j) / tau - max_logit);
            den += e;
            if (keys.labels[j] == anchors.labels[i]) num += e;
        }
        total += -std::log(num / den);
        ++counted;
        for (int j = 0; j < nk; ++j) {
            if (exclude_aligned_self && j == i) continue;
            const double e = std::exp(sim(i, j) / tau - max_logit);
            const double p_den = e / den;
            const double p_num = (keys.labels[j] == anchors.labels[i]) ? e / num : 0.0;
            d_sim(i, j) = (p_den - p_num) / tau;
        }
    }

    if (counted == 0) return out;  // zero loss, zero gradient, counter set
    out.value = total / counted;
    d_sim /= static_cast<double>(counted);

    // Chain rule through sim_ij = a_i . k_j / (|a_i| |k_j|).
    for (int i = 0; i < na; ++i) {
        const double an = a_norm[i];
        Eigen::RowVectorXd grad = Eigen::RowVectorXd::Zero(anchors.dim());
        for (int j = 0; j < nk; ++j) {
            if (d_sim(i, j) == 0.0) continue;
            grad += d_sim(i, j) * (keys.embeddings.row(j) / (an * k_norm[j]) -
                                   (sim(i, j) / (an * an)) * anchors.embeddings.row(i));
        }
        out.d_anchors.row(i) = grad;
    }
    return out;
}

inline ContrastiveResult supervised_contrastive_loss(const LatentBatch& anchors,
                                                     const LatentBatch& keys, double tau,
                                                     bool exclude_aligned_self = true) {
    const auto full = supervised_contrastive_loss_grad(anchors, keys, tau, exclude_aligned_self);
    return {full.value, full.anchors_without_positives};
}

// Mean negative log-likelihood with max-subtraction for stability.
inline double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
    const int n = static_cast<int>(logits.rows());
    const int c = static_cast<int>(logits.cols());
    require(n >= 1 && labels.size() == n, "cross_entropy: one label per logits row required");
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        require(labels[i] >= 0 && labels[i] < c, "cross_entropy: label out of range");
        const double m = logits.row(i).maxCoeff();
        double lse = 0.0;
        for (int j = 0; j < c; ++j) lse += std::exp(logits(i, j) - m);
        total += std::log(lse) - (logits(i, labels[i]) - m);
    }
    return total / n;
}

struct CrossEntropyGradResult {
    double value = 0.0;
    Eigen::MatrixXd d_logits;
};

inline CrossEntropyGradResult cross_entropy_grad(const Eigen::MatrixXd& logits,
                                                 const Eigen::VectorXi& labels) {
    const int n = static_cast<int>(logits.rows());
    const int c = static_cast<int>(logits.cols());
    require(n >= 1 && labels.size() == n, "cross_entropy: one label per logits row required");
    CrossEntropyGradResult out;
    out.d_logits.resize(n, c);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        require(labels[i] >= 0 && labels[i] < c, "cross_entropy: label out of range");
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        const double lse = e.sum();
        total += std::log(lse) - (logits(i, labels[i]) - m);
        out.d_logits.row(i) = e / lse / n;
        out.d_logits(i, labels[i]) -= 1.0 / n;
    }
    out.value = total / n;
    return out;
}

struct Stage1Result {
    double total = 0.0;
    double mmd = 0.0;
    double ctr = 0.0;
    int anchors_without_positives = 0;
};

// Weighted sum lambda_mmd * L_mmd + lambda_ctr * L_ctr; both components are
// returned for logging.
inline Stage1Result stage1_loss(const Eigen::MatrixXd& z_src, const Eigen::MatrixXd& z_trg,
                                const LatentBatch& anchors, const LatentBatch& keys,
                                const LossWeights& weights, const KernelSpec& kernel,
                                bool exclude_aligned_self = true) {
    weights.validate();
    Stage1Result out;
    out.mmd = mmd_loss(z_src, z_trg, kernel);
    const auto ctr = supervised_contrastive_loss(anchors, keys, weights.tau, exclude_aligned_self);
    out.ctr = ctr.value;
    out.anchors_without_positives = ctr.anchors_without_positives;
    out.total = weights.lambda_mmd * out.mmd + weights.lambda_ctr * out.ctr;
    return out;
}

struct Stage2Result {
    double total = 0.0;
    double ce_src = 0.0;
    double ce_trg = 0.0;
    int empty_target_batches = 0;
};

// Sum of source and target cross-entropies, each averaged over its own batch.
// An empty labeled-target batch contributes zero and bumps the counter.
inline Stage2Result stage2_loss(const Eigen::MatrixXd& logits_src, const Eigen::VectorXi& labels_src,
                                const Eigen::MatrixXd& logits_trg,
                                const Eigen::VectorXi& labels_trg) {
    Stage2Result out;
    out.ce_src = cross_entropy(logits_src, labels_src);
    if (logits_trg.rows() > 0) {
        out.ce_trg = cross_entropy(logits_trg, labels_trg);
    } else {
        ++out.empty_target_batches;
    }
    out.total = out.ce_src + out.ce_trg;
    return out;
}

struct TotalLossResult {
    double total = 0.0;
    double mmd = 0.0;
    double ctr = 0.0;
    double ce_src = 0.0;
    double ce_trg = 0.0;
    int anchors_without_positives = 0;
    int empty_target_batches = 0;
};

// Joint objective lambda_mmd * L_mmd + lambda_ctr * L_ctr + (L_ce^s + L_ce^t),
// used only by the single-loop training mode.
inline TotalLossResult total_loss(const Eigen::MatrixXd& z_src, const Eigen::MatrixXd& z_trg,
                                  const LatentBatch& anchors, const LatentBatch& keys,
                                  const Eigen::MatrixXd& logits_src, const Eigen::VectorXi& labels_src,
                                  const Eigen::MatrixXd& logits_trg, const Eigen::VectorXi& labels_trg,
                                  const LossWeights& weights, const KernelSpec& kernel,
                                  bool exclude_aligned_self = true) {
    const auto s1 = stage1_loss(z_src, z_trg, anchors, keys, weights, kernel, exclude_aligned_self);
    const auto s2 = stage2_loss(logits_src, labels_src, logits_trg, labels_trg);
    TotalLossResult out;
    out.mmd = s1.mmd;
    out.ctr = s1.ctr;
    out.anchors_without_positives = s1.anchors_without_positives;
    out.ce_src = s2.ce_src;
    out.ce_trg = s2.ce_trg;
    out.empty_target_batches = s2.empty_target_batches;
    out.total = s1.total + s2.total;
    return out;
}

}  // namespace mossda
