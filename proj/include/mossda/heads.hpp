#pragma once

#include <string>
#include <vector>

#include "mossda/layers.hpp"

namespace mossda {

// Two-layer projection head: linear -> ReLU -> linear.
template <typename Scalar>
class Mlp2 {
public:
    Mlp2() = default;
    Mlp2(int in_features, int hidden, int out_features, Rng& rng)
        : lin1_(in_features, hidden, rng), lin2_(hidden, out_features, rng) {}

    struct Cache {
        typename Linear<Scalar>::Cache lin1, lin2;
        typename ReluMat<Scalar>::Cache relu;
    };

    MatX<Scalar> forward(const MatX<Scalar>& x, Cache& cache) const {
        MatX<Scalar> h = lin1_.forward(x, cache.lin1);
        h = relu_.forward(h, cache.relu);
        return lin2_.forward(h, cache.lin2);
    }

    MatX<Scalar> backward(const MatX<Scalar>& dy, Cache& cache) {
        MatX<Scalar> dh = lin2_.backward(dy, cache.lin2);
        dh = relu_.backward(dh, cache.relu);
        return lin1_.backward(dh, cache.lin1);
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        lin1_.collect_params(out, prefix + ".lin1");
        lin2_.collect_params(out, prefix + ".lin2");
    }

    int out_features() const { return lin2_.out_features(); }

private:
    Linear<Scalar> lin1_, lin2_;
    ReluMat<Scalar> relu_;
};

// Online head h_q (trained by backpropagation) and momentum head h_m whose
// parameters only ever move by the EMA update
//   theta_m <- m * theta_m + (1 - m) * theta_q,
// applied once after each optimizer step. At initialization theta_m is an
// exact copy of theta_q.
template <typename Scalar>
class ProjectionHeads {
public:
    ProjectionHeads() = default;
    ProjectionHeads(int in_features, int hidden, int proj_dim, Rng& rng)
        : online_(in_features, hidden, proj_dim, rng),
          momentum_(in_features, hidden, proj_dim, rng) {
        copy_online_to_momentum();
    }

    void copy_online_to_momentum() {
        auto pairs = ema_pairs();
        for (auto& [q, m] : pairs)
            for (std::size_t i = 0; i < q.count; ++i) m.value[i] = q.value[i];
    }

    void ema_update(double m) {
        require(m >= 0.0 && m < 1.0, "ema_update: momentum must lie in [0, 1)");
        auto pairs = ema_pairs();
        for (auto& [q, mm] : pairs)
            for (std::size_t i = 0; i < q.count; ++i)
                mm.value[i] = static_cast<Scalar>(m * mm.value[i] + (1.0 - m) * q.value[i]);
    }

    Mlp2<Scalar>& online() { return online_; }
    Mlp2<Scalar>& momentum() { return momentum_; }
    const Mlp2<Scalar>& online() const { return online_; }
    const Mlp2<Scalar>& momentum() const { return momentum_; }

    std::vector<std::pair<ParamRef<Scalar>, ParamRef<Scalar>>> ema_pairs() {
        std::vector<ParamRef<Scalar>> q, m;
        online_.collect_params(q, "online");
        momentum_.collect_params(m, "momentum");
        std::vector<std::pair<ParamRef<Scalar>, ParamRef<Scalar>>> pairs;
        for (std::size_t i = 0; i < q.size(); ++i) pairs.emplace_back(q[i], m[i]);
        return pairs;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        online_.collect_params(out, prefix + ".online");
        momentum_.collect_params(out, prefix + ".momentum");
    }

private:
    Mlp2<Scalar> online_, momentum_;
};

}  // namespace mossda
