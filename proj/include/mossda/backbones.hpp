#pragma once

#include <array>
#include <string>
#include <vector>

#include "mossda/layers.hpp"

namespace mossda {

enum class BackboneKind { cnn, resnet18, tcn };

struct BackboneSpec {
    BackboneKind kind = BackboneKind::cnn;
    int in_channels = 1;
    int seq_len = 32;
    int feature_dim = 128;

    void validate() const {
        require(in_channels >= 1 && seq_len >= 1 && feature_dim >= 1,
                "BackboneSpec: dimensions must be positive");
        if (kind == BackboneKind::cnn)
            require(seq_len >= 8, "BackboneSpec: cnn needs seq_len >= 8 (three halvings)");
        if (kind == BackboneKind::resnet18)
            require(seq_len >= 16, "BackboneSpec: resnet18 needs seq_len >= 16 (four halvings)");
    }
};

namespace detail {

template <typename Scalar>
void add_inplace(Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace detail

// Three blocks of {conv, batch norm, ReLU, max-pool/2} with kernel sizes
// (8, 5, 3) and widths (64, 128, feature_dim), then a global average pool.
template <typename Scalar>
class CnnBackbone {
public:
    CnnBackbone() = default;
    CnnBackbone(const BackboneSpec& spec, Rng& rng) : spec_(spec) {
        spec.validate();
        const std::array<int, 3> kernels = {8, 5, 3};
        const std::array<int, 3> widths = {64, 128, spec.feature_dim};
        int c_in = spec.in_channels;
        for (int i = 0; i < 3; ++i) {
            auto [pl, pr] = same_padding(kernels[i]);
            convs_[i] = Conv1d<Scalar>(c_in, widths[i], kernels[i], 1, pl, pr, 1, rng);
            norms_[i] = BatchNorm1d<Scalar>(widths[i]);
            c_in = widths[i];
        }
    }

    struct Cache {
        std::array<typename Conv1d<Scalar>::Cache, 3> conv;
        std::array<typename BatchNorm1d<Scalar>::Cache, 3> bn;
        std::array<typename Relu3<Scalar>::Cache, 3> relu;
        std::array<typename MaxPool1d<Scalar>::Cache, 3> pool;
        typename GlobalAvgPool<Scalar>::Cache gap;
    };

    MatX<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache, bool train) {
        require(x.channels == spec_.in_channels && x.steps == spec_.seq_len,
                "CnnBackbone: input shape does not match spec");
        Tensor3<Scalar> h = x;
        for (int i = 0; i < 3; ++i) {
            h = convs_[i].forward(h, cache.conv[i]);
            h = norms_[i].forward(h, cache.bn[i], train);
            h = relu_.forward(h, cache.relu[i]);
            h = pool_.forward(h, cache.pool[i]);
        }
        return gap_.forward(h, cache.gap);
    }

    Tensor3<Scalar> backward(const MatX<Scalar>& d_features, Cache& cache) {
        Tensor3<Scalar> dh = gap_.backward(d_features, cache.gap);
        for (int i = 2; i >= 0; --i) {
            dh = pool_.backward(dh, cache.pool[i]);
            dh = relu_.backward(dh, cache.relu[i]);
            dh = norms_[i].backward(dh, cache.bn[i]);
            dh = convs_[i].backward(dh, cache.conv[i]);
        }
        return dh;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        for (int i = 0; i < 3; ++i) {
            convs_[i].collect_params(out, prefix + ".block" + std::to_string(i) + ".conv");
            norms_[i].collect_params(out, prefix + ".block" + std::to_string(i) + ".bn");
        }
    }

    void collect_state(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        for (int i = 0; i < 3; ++i)
            norms_[i].collect_state(out, prefix + ".block" + std::to_string(i) + ".bn");
    }

    const BackboneSpec& spec() const { return spec_; }

private:
    BackboneSpec spec_;
    std::array<Conv1d<Scalar>, 3> convs_;
    std::array<BatchNorm1d<Scalar>, 3> norms_;
    Relu3<Scalar> relu_;
    MaxPool1d<Scalar> pool_;
    GlobalAvgPool<Scalar> gap_;
};

// Residual basic block: conv-bn-relu-conv-bn plus an identity or projected
// shortcut, ReLU after the sum. The first conv carries the stride.
template <typename Scalar>
class BasicBlock1d {
public:
    BasicBlock1d() = default;
    BasicBlock1d(int in_channels, int out_channels, int stride, Rng& rng)
        : projected_(stride != 1 || in_channels != out_channels) {
        auto [pl, pr] = same_padding(3);
        conv1_ = Conv1d<Scalar>(in_channels, out_channels, 3, stride, pl, pr, 1, rng);
        bn1_ = BatchNorm1d<Scalar>(out_channels);
        conv2_ = Conv1d<Scalar>(out_channels, out_channels, 3, 1, pl, pr, 1, rng);
        bn2_ = BatchNorm1d<Scalar>(out_channels);
        if (projected_) {
            proj_conv_ = Conv1d<Scalar>(in_channels, out_channels, 1, stride, 0, 0, 1, rng);
            proj_bn_ = BatchNorm1d<Scalar>(out_channels);
        }
    }

    struct Cache {
        typename Conv1d<Scalar>::Cache conv1, conv2, proj;
        typename BatchNorm1d<Scalar>::Cache bn1, bn2, proj_bn;
        typename Relu3<Scalar>::Cache relu1, relu2;
    };

    Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache, bool train) {
        Tensor3<Scalar> h = conv1_.forward(x, cache.conv1);
        h = bn1_.forward(h, cache.bn1, train);
        h = relu_.forward(h, cache.relu1);
        h = conv2_.forward(h, cache.conv2);
        h = bn2_.forward(h, cache.bn2, train);
        if (projected_) {
            Tensor3<Scalar> s = proj_conv_.forward(x, cache.proj);
            s = proj_bn_.forward(s, cache.proj_bn, train);
            detail::add_inplace(h, s);
        } else {
            detail::add_inplace(h, x);
        }
        return relu_.forward(h, cache.relu2);
    }

    Tensor3<Scalar> backward(const Tensor3<Scalar>& dy, Cache& cache) {
        const Tensor3<Scalar> dsum = relu_.backward(dy, cache.relu2);
        Tensor3<Scalar> dh = bn2_.backward(dsum, cache.bn2);
        dh = conv2_.backward(dh, cache.conv2);
        dh = relu_.backward(dh, cache.relu1);
        dh = bn1_.backward(dh, cache.bn1);
        Tensor3<Scalar> dx = conv1_.backward(dh, cache.conv1);
        if (projected_) {
            Tensor3<Scalar> ds = proj_bn_.backward(dsum, cache.proj_bn);
            ds = proj_conv_.backward(ds, cache.proj);
            detail::add_inplace(dx, ds);
        } else {
            detail::add_inplace(dx, dsum);
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        conv1_.collect_params(out, prefix + ".conv1");
        bn1_.collect_params(out, prefix + ".bn1");
        conv2_.collect_params(out, prefix + ".conv2");
        bn2_.collect_params(out, prefix + ".bn2");
        if (projected_) {
            proj_conv_.collect_params(out, prefix + ".proj.conv");
            proj_bn_.collect_params(out, prefix + ".proj.bn");
        }
    }

    void collect_state(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        bn1_.collect_state(out, prefix + ".bn1");
        bn2_.collect_state(out, prefix + ".bn2");
        if (projected_) proj_bn_.collect_state(out, prefix + ".proj.bn");
    }

private:
    bool projected_ = false;
    Conv1d<Scalar> conv1_, conv2_, proj_conv_;
    BatchNorm1d<Scalar> bn1_, bn2_, proj_bn_;
    Relu3<Scalar> relu_;
};

// Stem conv (kernel 7, stride 2) + four stages of two basic blocks with
// widths (64, 128, 256, 512), global average pool, linear map to feature_dim.
template <typename Scalar>
class ResNetBackbone {
public:
    ResNetBackbone() = default;
    ResNetBackbone(const BackboneSpec& spec, Rng& rng) : spec_(spec) {
        spec.validate();
        auto [pl, pr] = same_padding(7);
        stem_ = Conv1d<Scalar>(spec.in_channels, 64, 7, 2, pl, pr, 1, rng);
        stem_bn_ = BatchNorm1d<Scalar>(64);
        const std::array<int, 4> widths = {64, 128, 256, 512};
        int c_in = 64;
        for (int s = 0; s < 4; ++s) {
            const int stride = (s == 0) ? 1 : 2;
            blocks_[2 * s] = BasicBlock1d<Scalar>(c_in, widths[s], stride, rng);
            blocks_[2 * s + 1] = BasicBlock1d<Scalar>(widths[s], widths[s], 1, rng);
            c_in = widths[s];
        }
        head_ = Linear<Scalar>(512, spec.feature_dim, rng);
    }

    struct Cache {
        typename Conv1d<Scalar>::Cache stem;
        typename BatchNorm1d<Scalar>::Cache stem_bn;
        typename Relu3<Scalar>::Cache stem_relu;
        std::array<typename BasicBlock1d<Scalar>::Cache, 8> blocks;
        typename GlobalAvgPool<Scalar>::Cache gap;
        typename Linear<Scalar>::Cache head;
    };

    MatX<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache, bool train) {
        require(x.channels == spec_.in_channels && x.steps == spec_.seq_len,
                "ResNetBackbone: input shape does not match spec");
        Tensor3<Scalar> h = stem_.forward(x, cache.stem);
        h = stem_bn_.forward(h, cache.stem_bn, train);
        h = relu_.forward(h, cache.stem_relu);
        for (int i = 0; i < 8; ++i) h = blocks_[i].forward(h, cache.blocks[i], train);
        MatX<Scalar> pooled = gap_.forward(h, cache.gap);
        return head_.forward(pooled, cache.head);
    }

    Tensor3<Scalar> backward(const MatX<Scalar>& d_features, Cache& cache) {
        const MatX<Scalar> d_pooled = head_.backward(d_features, cache.head);
        Tensor3<Scalar> dh = gap_.backward(d_pooled, cache.gap);
        for (int i = 7; i >= 0; --i) dh = blocks_[i].backward(dh, cache.blocks[i]);
        dh = relu_.backward(dh, cache.stem_relu);
        dh = stem_bn_.backward(dh, cache.stem_bn);
        return stem_.backward(dh, cache.stem);
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        stem_.collect_params(out, prefix + ".stem.conv");
        stem_bn_.collect_params(out, prefix + ".stem.bn");
        for (int i = 0; i < 8; ++i)
            blocks_[i].collect_params(out, prefix + ".block" + std::to_string(i));
        head_.collect_params(out, prefix + ".head");
    }

    void collect_state(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        stem_bn_.collect_state(out, prefix + ".stem.bn");
        for (int i = 0; i < 8; ++i)
            blocks_[i].collect_state(out, prefix + ".block" + std::to_string(i));
    }

    const BackboneSpec& spec() const { return spec_; }

private:
    BackboneSpec spec_;
    Conv1d<Scalar> stem_;
    BatchNorm1d<Scalar> stem_bn_;
    std::array<BasicBlock1d<Scalar>, 8> blocks_;
    Relu3<Scalar> relu_;
    GlobalAvgPool<Scalar> gap_;
    Linear<Scalar> head_;
};

// Two causal dilated convolutions with a residual connection; dilation is
// fixed per block.
template <typename Scalar>
class TcnBlock {
public:
    TcnBlock() = default;
    TcnBlock(int in_channels, int out_channels, int kernel, int dilation, Rng& rng)
        : projected_(in_channels != out_channels) {
        const int pad = (kernel - 1) * dilation;  // left-only: causal
        conv1_ = Conv1d<Scalar>(in_channels, out_channels, kernel, 1, pad, 0, dilation, rng);
        conv2_ = Conv1d<Scalar>(out_channels, out_channels, kernel, 1, pad, 0, dilation, rng);
        if (projected_) proj_ = Conv1d<Scalar>(in_channels, out_channels, 1, 1, 0, 0, 1, rng);
    }

    struct Cache {
        typename Conv1d<Scalar>::Cache conv1, conv2, proj;
        typename Relu3<Scalar>::Cache relu1, relu2;
    };

    Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache) {
        Tensor3<Scalar> h = conv1_.forward(x, cache.conv1);
        h = relu_.forward(h, cache.relu1);
        h = conv2_.forward(h, cache.conv2);
        if (projected_) {
            detail::add_inplace(h, proj_.forward(x, cache.proj));
        } else {
            detail::add_inplace(h, x);
        }
        return relu_.forward(h, cache.relu2);
    }

    Tensor3<Scalar> backward(const Tensor3<Scalar>& dy, Cache& cache) {
        const Tensor3<Scalar> dsum = relu_.backward(dy, cache.relu2);
        Tensor3<Scalar> dh = conv2_.backward(dsum, cache.conv2);
        dh = relu_.backward(dh, cache.relu1);
        Tensor3<Scalar> dx = conv1_.backward(dh, cache.conv1);
        if (projected_) {
            detail::add_inplace(dx, proj_.backward(dsum, cache.proj));
        } else {
            detail::add_inplace(dx, dsum);
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        conv1_.collect_params(out, prefix + ".conv1");
        conv2_.collect_params(out, prefix + ".conv2");
        if (projected_) proj_.collect_params(out, prefix + ".proj");
    }

private:
    bool projected_ = false;
    Conv1d<Scalar> conv1_, conv2_, proj_;
    Relu3<Scalar> relu_;
};

// Causal dilated stack: dilation doubles per block until the receptive field
// 1 + 2*(kernel-1)*(2^L - 1) covers the sequence, then global average pool
// and a linear map to feature_dim.
template <typename Scalar>
class TcnBackbone {
public:
    static constexpr int kKernel = 3;
    static constexpr int kWidth = 64;

    static int levels_for(int seq_len) {
        int levels = 1;
        while (receptive_field(levels) < seq_len) ++levels;
        return levels;
    }

    static int receptive_field(int levels) {
        return 1 + 2 * (kKernel - 1) * ((1 << levels) - 1);
    }

    TcnBackbone() = default;
    TcnBackbone(const BackboneSpec& spec, Rng& rng) : spec_(spec) {
        spec.validate();
        const int levels = levels_for(spec.seq_len);
        int c_in = spec.in_channels;
        blocks_.reserve(levels);
        for (int l = 0; l < levels; ++l) {
            blocks_.emplace_back(c_in, kWidth, kKernel, 1 << l, rng);
            c_in = kWidth;
        }
        head_ = Linear<Scalar>(kWidth, spec.feature_dim, rng);
    }

    struct Cache {
        std::vector<typename TcnBlock<Scalar>::Cache> blocks;
        typename GlobalAvgPool<Scalar>::Cache gap;
        typename Linear<Scalar>::Cache head;
        Tensor3<Scalar> pre_pool;  // kept for causality probes
    };

    MatX<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache, bool /*train*/) {
        require(x.channels == spec_.in_channels && x.steps == spec_.seq_len,
                "TcnBackbone: input shape does not match spec");
        cache.blocks.resize(blocks_.size());
        Tensor3<Scalar> h = x;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            h = blocks_[i].forward(h, cache.blocks[i]);
        cache.pre_pool = h;
        MatX<Scalar> pooled = gap_.forward(h, cache.gap);
        return head_.forward(pooled, cache.head);
    }

    Tensor3<Scalar> backward(const MatX<Scalar>& d_features, Cache& cache) {
        const MatX<Scalar> d_pooled = head_.backward(d_features, cache.head);
        Tensor3<Scalar> dh = gap_.backward(d_pooled, cache.gap);
        for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i)
            dh = blocks_[i].backward(dh, cache.blocks[i]);
        return dh;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect_params(out, prefix + ".block" + std::to_string(i));
        head_.collect_params(out, prefix + ".head");
    }

    int levels() const { return static_cast<int>(blocks_.size()); }
    const BackboneSpec& spec() const { return spec_; }

private:
    BackboneSpec spec_;
    std::vector<TcnBlock<Scalar>> blocks_;
    GlobalAvgPool<Scalar> gap_;
    Linear<Scalar> head_;
};

}  // namespace mossda
