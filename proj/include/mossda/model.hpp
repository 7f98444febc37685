#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mossda/backbones.hpp"
#include "mossda/heads.hpp"
#include "mossda/optim.hpp"

namespace mossda {

using Tensor3f = Tensor3<float>;
using MatXf = MatX<float>;

// Scratch buffers for one forward pass of the feature extractor. A training
// step keeps one per domain so both backward passes see their own
// activations.
struct FeatureCache {
    CnnBackbone<float>::Cache cnn;
    ResNetBackbone<float>::Cache resnet;
    TcnBackbone<float>::Cache tcn;
};

// Every parameterized component of the method: the backbone f, the
// online/momentum projection heads h_q and h_m, the linear classifier, and
// the optimizer moments. Single-writer; read-only forwards on a frozen state
// may run concurrently.
class ModelState {
public:
    ModelState() = default;

    static ModelState create(const BackboneSpec& spec, int num_classes, int proj_dim,
                             std::uint64_t seed) {
        spec.validate();
        require(num_classes >= 2, "ModelState: at least 2 classes required");
        require(proj_dim >= 1, "ModelState: proj_dim must be positive");
        ModelState s;
        s.spec_ = spec;
        s.num_classes_ = num_classes;
        s.proj_dim_ = proj_dim;
        s.seed_ = seed;
        Rng rng(derive_seed(seed, 0x6d6f64656cULL));  // model-init stream
        switch (spec.kind) {
            case BackboneKind::cnn:
                s.cnn_ = std::make_unique<CnnBackbone<float>>(spec, rng);
                break;
            case BackboneKind::resnet18:
                s.resnet_ = std::make_unique<ResNetBackbone<float>>(spec, rng);
                break;
            case BackboneKind::tcn:
                s.tcn_ = std::make_unique<TcnBackbone<float>>(spec, rng);
                break;
        }
        s.heads_ = ProjectionHeads<float>(spec.feature_dim, spec.feature_dim, proj_dim, rng);
        s.classifier_ = Linear<float>(spec.feature_dim, num_classes, rng);
        return s;
    }

    MatXf forward_features(const Tensor3f& x, FeatureCache& cache, bool train) {
        switch (spec_.kind) {
            case BackboneKind::cnn: return cnn_->forward(x, cache.cnn, train);
            case BackboneKind::resnet18: return resnet_->forward(x, cache.resnet, train);
            case BackboneKind::tcn: return tcn_->forward(x, cache.tcn, train);
        }
        throw std::logic_error("ModelState: unknown backbone kind");
    }

    void features_backward(const MatXf& d_features, FeatureCache& cache) {
        switch (spec_.kind) {
            case BackboneKind::cnn: cnn_->backward(d_features, cache.cnn); return;
            case BackboneKind::resnet18: resnet_->backward(d_features, cache.resnet); return;
            case BackboneKind::tcn: tcn_->backward(d_features, cache.tcn); return;
        }
    }

    MatXf project_online(const MatXf& z, Mlp2<float>::Cache& cache) const {
        return heads_.online().forward(z, cache);
    }

    // Momentum-path projection; constant w.r.t. gradients, so no caller ever
    // backpropagates through it and no cache is retained.
    MatXf project_momentum(const MatXf& z) const {
        Mlp2<float>::Cache scratch;
        return heads_.momentum().forward(z, scratch);
    }

    MatXf online_backward(const MatXf& d_proj, Mlp2<float>::Cache& cache) {
        return heads_.online().backward(d_proj, cache);
    }

    MatXf classify(const MatXf& z, Linear<float>::Cache& cache) const {
        return classifier_.forward(z, cache);
    }

    MatXf classify(const MatXf& z) const {
        Linear<float>::Cache scratch;
        return classifier_.forward(z, scratch);
    }

    MatXf classify_backward(const MatXf& d_logits, Linear<float>::Cache& cache) {
        return classifier_.backward(d_logits, cache);
    }

    std::vector<ParamRef<float>> backbone_params() {
        std::vector<ParamRef<float>> out;
        switch (spec_.kind) {
            case BackboneKind::cnn: cnn_->collect_params(out, "backbone"); break;
            case BackboneKind::resnet18: resnet_->collect_params(out, "backbone"); break;
            case BackboneKind::tcn: tcn_->collect_params(out, "backbone"); break;
        }
        return out;
    }

    std::vector<ParamRef<float>> online_head_params() {
        std::vector<ParamRef<float>> out;
        heads_.online().collect_params(out, "heads.online");
        return out;
    }

    std::vector<ParamRef<float>> momentum_head_params() {
        std::vector<ParamRef<float>> out;
        heads_.momentum().collect_params(out, "heads.momentum");
        return out;
    }

    std::vector<ParamRef<float>> classifier_params() {
        std::vector<ParamRef<float>> out;
        classifier_.collect_params(out, "classifier");
        return out;
    }

    // Trainable parameters plus batch-norm running statistics, i.e. every
    // tensor a checkpoint must carry.
    std::vector<ParamRef<float>> all_tensors() {
        std::vector<ParamRef<float>> out = backbone_params();
        switch (spec_.kind) {
            case BackboneKind::cnn: cnn_->collect_state(out, "backbone"); break;
            case BackboneKind::resnet18: resnet_->collect_state(out, "backbone"); break;
            case BackboneKind::tcn: break;  // no normalization state
        }
        heads_.collect_params(out, "heads");
        classifier_.collect_params(out, "classifier");
        return out;
    }

    ProjectionHeads<float>& heads() { return heads_; }
    const BackboneSpec& spec() const { return spec_; }
    int num_classes() const { return num_classes_; }
    int proj_dim() const { return proj_dim_; }
    std::uint64_t seed() const { return seed_; }
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }
    void bump_step() { ++step_; }
    OptimizerState& optimizer_state() { return opt_state_; }

private:
    BackboneSpec spec_;
    int num_classes_ = 0;
    int proj_dim_ = 0;
    std::uint64_t seed_ = 0;
    std::int64_t step_ = 0;
    std::unique_ptr<CnnBackbone<float>> cnn_;
    std::unique_ptr<ResNetBackbone<float>> resnet_;
    std::unique_ptr<TcnBackbone<float>> tcn_;
    ProjectionHeads<float> heads_;
    Linear<float> classifier_;
    OptimizerState opt_state_;
};

}  // namespace mossda
