#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mossda/layers.hpp"

namespace mossda {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter Adam moments, keyed by parameter name so that disjoint
// stages can share one container and the whole thing serializes with the
// model.
struct AdamEntry {
    std::vector<float> m;
    std::vector<float> v;
    std::int64_t t = 0;
};

struct OptimizerState {
    std::map<std::string, AdamEntry> entries;

    void clear() { entries.clear(); }
};

inline void zero_grads(std::vector<ParamRef<float>>& params) {
    for (auto& p : params)
        for (std::size_t i = 0; i < p.count; ++i) p.grad[i] = 0.0f;
}

inline double grad_norm(const std::vector<ParamRef<float>>& params) {
    double sq = 0.0;
    for (const auto& p : params)
        for (std::size_t i = 0; i < p.count; ++i) sq += double(p.grad[i]) * p.grad[i];
    return std::sqrt(sq);
}

// One optimizer step over the given parameter set. Weight decay is added to
// the gradient (L2 style) before the moment updates.
inline void optimizer_step(std::vector<ParamRef<float>>& params, OptimizerState& state,
                           const OptimizerConfig& cfg) {
    for (auto& p : params) {
        if (cfg.kind == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < p.count; ++i) {
                const double g = double(p.grad[i]) + cfg.weight_decay * p.value[i];
                p.value[i] = static_cast<float>(p.value[i] - cfg.lr * g);
            }
            continue;
        }
        AdamEntry& e = state.entries[p.name];
        if (e.m.size() != p.count) {
            e.m.assign(p.count, 0.0f);
            e.v.assign(p.count, 0.0f);
            e.t = 0;
        }
        ++e.t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.t));
        for (std::size_t i = 0; i < p.count; ++i) {
            const double g = double(p.grad[i]) + cfg.weight_decay * p.value[i];
            e.m[i] = static_cast<float>(cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g);
            e.v[i] = static_cast<float>(cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g);
            const double m_hat = e.m[i] / bc1;
            const double v_hat = e.v[i] / bc2;
            p.value[i] = static_cast<float>(p.value[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
        }
    }
}

}  // namespace mossda
