#include "mossda/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "json.hpp"
#include "mossda/manifest.hpp"

namespace mossda {

namespace {

constexpr std::uint64_t kBatchStream = 0x626174ULL;
constexpr std::uint64_t kStage2Stream = 0x733274ULL;
constexpr std::uint64_t kMixupStream = 0x6d6978ULL;
constexpr std::uint64_t kSourceOnlyStream = 0x736f6cULL;

Eigen::MatrixXd to_double(const MatXf& m) { return m.cast<double>(); }

MatXf to_float(const Eigen::MatrixXd& m) { return m.cast<float>(); }

Tensor3f concat_rows(const Tensor3f& a, const Tensor3f& b) {
    Tensor3f out(a.n + b.n, a.channels, a.steps);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

LatentBatch make_labeled_batch(const Eigen::MatrixXd& emb, const Eigen::VectorXi& src_y,
                               const Eigen::VectorXi& trg_y) {
    LatentBatch batch;
    batch.embeddings = emb;
    batch.labels.resize(src_y.size() + trg_y.size());
    batch.labels << src_y, trg_y;
    batch.domain.assign(static_cast<std::size_t>(src_y.size()), Domain::source);
    batch.domain.insert(batch.domain.end(), static_cast<std::size_t>(trg_y.size()),
                        Domain::target);
    batch.origin.assign(batch.domain.size(), Origin::real);
    return batch;
}

void check_finite(double total, const StepDiagnostics& diag) {
    if (!std::isfinite(total))
        throw TrainingAbort("training aborted: non-finite loss at step " +
                                std::to_string(diag.step),
                            diag);
}

// Backbone features for selected train rows, evaluation mode, chunked.
MatXf frozen_features(ModelState& state, const DomainDataset& ds, const std::vector<int>& rows) {
    MatXf out(static_cast<int>(rows.size()), state.spec().feature_dim);
    const int chunk = 256;
    FeatureCache cache;
    for (std::size_t start = 0; start < rows.size(); start += chunk) {
        const std::size_t n = std::min<std::size_t>(chunk, rows.size() - start);
        const std::vector<int> part(rows.begin() + start, rows.begin() + start + n);
        const Tensor3f x = ds.normalized_rows(part);
        out.middleRows(static_cast<int>(start), static_cast<int>(n)) =
            state.forward_features(x, cache, /*train=*/false);
    }
    return out;
}

}  // namespace

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::two_stage: return "two_stage";
        case TrainMode::joint: return "joint";
        case TrainMode::no_mmd: return "no_mmd";
        case TrainMode::no_ctr: return "no_ctr";
        case TrainMode::no_mixup: return "no_mixup";
        case TrainMode::source_only: return "source_only";
    }
    return "two_stage";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "two_stage") return TrainMode::two_stage;
    if (s == "joint") return TrainMode::joint;
    if (s == "no_mmd") return TrainMode::no_mmd;
    if (s == "no_ctr") return TrainMode::no_ctr;
    if (s == "no_mixup") return TrainMode::no_mixup;
    if (s == "source_only") return TrainMode::source_only;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

void TrainConfig::validate() const {
    backbone_kind();  // throws on unknown name
    require(feature_dim >= 1 && proj_dim >= 1, "TrainConfig: dims must be positive");
    weights.validate();
    kernel.validate();
    require(optimizer.lr > 0.0, "TrainConfig: learning rate must be positive");
    require(optimizer.weight_decay >= 0.0, "TrainConfig: weight decay must be nonnegative");
    require(batch_size >= 2, "TrainConfig: batch size must be at least 2");
    require(epochs_stage1 >= 0 && epochs_stage2 >= 0, "TrainConfig: epochs must be nonnegative");
    require(u > 0.0 && u < 1.0, "TrainConfig: u must lie in (0, 1)");
}

BackboneKind TrainConfig::backbone_kind() const {
    if (backbone == "cnn") return BackboneKind::cnn;
    if (backbone == "resnet18") return BackboneKind::resnet18;
    if (backbone == "tcn") return BackboneKind::tcn;
    throw std::invalid_argument("unknown backbone '" + backbone + "'");
}

void train_stage1(ModelState& state, const DomainDataset& src, const DomainDataset& trg,
                  const TargetPartition& part, const TrainConfig& config,
                  std::vector<StepDiagnostics>& diagnostics) {
    if (config.epochs_stage1 == 0) return;
    const bool use_mmd = config.mode != TrainMode::no_mmd && config.weights.lambda_mmd > 0.0;
    const bool use_ctr = config.mode != TrainMode::no_ctr && config.weights.lambda_ctr > 0.0;
    const bool use_mixup =
        use_ctr && config.mode != TrainMode::no_mixup && config.mode != TrainMode::no_ctr;
    const double lambda_mmd = use_mmd ? config.weights.lambda_mmd : 0.0;
    const double lambda_ctr = use_ctr ? config.weights.lambda_ctr : 0.0;

    BatchPlan plan(src, trg, part, config.batch_size, derive_seed(config.seed, kBatchStream));
    Rng mixup_rng(derive_seed(config.seed, kMixupStream));

    auto stage1_params = state.backbone_params();
    {
        auto head = state.online_head_params();
        stage1_params.insert(stage1_params.end(), head.begin(), head.end());
    }
    auto backbone_params = state.backbone_params();
    auto online_params = state.online_head_params();

    for (int epoch = 0; epoch < config.epochs_stage1; ++epoch) {
        const auto batches = plan.epoch(epoch);
        for (const PairedBatch& batch : batches) {
            const int b_lab = static_cast<int>(batch.trg_lab_y.size());

            FeatureCache cache_src, cache_trg;
            const MatXf z_src = state.forward_features(batch.src_x, cache_src, /*train=*/true);
            const Tensor3f trg_x = concat_rows(batch.trg_lab_x, batch.trg_unl_x);
            const MatXf z_trg = state.forward_features(trg_x, cache_trg, /*train=*/true);
            if (!z_src.allFinite() || !z_trg.allFinite()) {
                StepDiagnostics snapshot;
                snapshot.step = state.step();
                snapshot.stage = 1;
                throw TrainingAbort("training aborted: non-finite features at step " +
                                        std::to_string(state.step()),
                                    snapshot);
            }

            // MMD over all target rows, labeled and unlabeled.
            const auto mmd = mmd_loss_grad(to_double(z_src), to_double(z_trg), config.kernel);

            // Labeled latents: every source row plus the labeled target rows.
            MatXf labeled(z_src.rows() + b_lab, z_src.cols());
            labeled << z_src, z_trg.topRows(b_lab);
            Mlp2<float>::Cache online_cache;
            const MatXf anchors_emb = state.project_online(labeled, online_cache);
            const MatXf keys_emb = state.project_momentum(labeled);

            LatentBatch anchors =
                make_labeled_batch(to_double(anchors_emb), batch.src_y, batch.trg_lab_y);
            LatentBatch keys =
                make_labeled_batch(to_double(keys_emb), batch.src_y, batch.trg_lab_y);
            if (use_mixup)
                keys = LatentBatch::concat(
                    keys, sample_mixup_batch(keys, config.weights.alpha, mixup_rng));

            const auto ctr =
                supervised_contrastive_loss_grad(anchors, keys, config.weights.tau,
                                                 /*exclude_aligned_self=*/true);

            StepDiagnostics diag;
            diag.step = state.step();
            diag.stage = 1;
            diag.l_mmd = mmd.value;
            diag.l_ctr = ctr.value;
            diag.anchors_without_positives = ctr.anchors_without_positives;
            const double total = lambda_mmd * mmd.value + lambda_ctr * ctr.value;
            check_finite(total, diag);

            zero_grads(stage1_params);
            MatXf d_src = MatXf::Zero(z_src.rows(), z_src.cols());
            MatXf d_trg = MatXf::Zero(z_trg.rows(), z_trg.cols());
            if (use_mmd) {
                d_src += to_float(lambda_mmd * mmd.d_src);
                d_trg += to_float(lambda_mmd * mmd.d_trg);
            }
            if (use_ctr && ctr.d_anchors.size() > 0) {
                const MatXf d_proj = to_float(lambda_ctr * ctr.d_anchors);
                const MatXf d_labeled = state.online_backward(d_proj, online_cache);
                d_src += d_labeled.topRows(z_src.rows());
                d_trg.topRows(b_lab) += d_labeled.bottomRows(b_lab);
            }
            state.features_backward(d_trg, cache_trg);
            state.features_backward(d_src, cache_src);

            diag.grad_backbone = grad_norm(backbone_params);
            diag.grad_online = grad_norm(online_params);
            optimizer_step(stage1_params, state.optimizer_state(), config.optimizer);
            if (config.ema_enabled) state.heads().ema_update(config.weights.momentum);
            state.bump_step();
            diagnostics.push_back(diag);
        }
    }
}

void train_stage2(ModelState& state, const DomainDataset& src, const DomainDataset& trg,
                  const TargetPartition& part, const TrainConfig& config,
                  std::vector<StepDiagnostics>& diagnostics) {
    if (config.epochs_stage2 == 0) return;
    BatchPlan plan(src, trg, part, config.batch_size, derive_seed(config.seed, kStage2Stream));
    auto classifier_params = state.classifier_params();

    // The encoder is frozen and in evaluation mode, so features are a fixed
    // map of row index; compute them once.
    std::vector<int> all_src(src.n_train());
    std::iota(all_src.begin(), all_src.end(), 0);
    const MatXf feat_src = frozen_features(state, src, all_src);
    const MatXf feat_trg_lab = frozen_features(state, trg, part.labeled_idx);
    std::vector<int> lab_pos(trg.n_train(), -1);
    for (std::size_t k = 0; k < part.labeled_idx.size(); ++k)
        lab_pos[part.labeled_idx[k]] = static_cast<int>(k);

    for (int epoch = 0; epoch < config.epochs_stage2; ++epoch) {
        const auto idx = plan.epoch_indices(epoch);
        for (int b = 0; b < plan.batches_per_epoch(); ++b) {
            MatXf zs(static_cast<int>(idx.src[b].size()), feat_src.cols());
            Eigen::VectorXi ys(zs.rows());
            for (std::size_t k = 0; k < idx.src[b].size(); ++k) {
                zs.row(static_cast<int>(k)) = feat_src.row(idx.src[b][k]);
                ys[static_cast<int>(k)] = src.y_train[idx.src[b][k]];
            }
            MatXf zt(static_cast<int>(idx.trg_lab[b].size()), feat_src.cols());
            Eigen::VectorXi yt(zt.rows());
            for (std::size_t k = 0; k < idx.trg_lab[b].size(); ++k) {
                zt.row(static_cast<int>(k)) = feat_trg_lab.row(lab_pos[idx.trg_lab[b][k]]);
                yt[static_cast<int>(k)] = trg.y_train[idx.trg_lab[b][k]];
            }

            Linear<float>::Cache cache_s, cache_t;
            const MatXf logits_s = state.classify(zs, cache_s);
            const MatXf logits_t = state.classify(zt, cache_t);
            const auto ce_s = cross_entropy_grad(to_double(logits_s), ys);
            CrossEntropyGradResult ce_t;
            if (zt.rows() > 0) ce_t = cross_entropy_grad(to_double(logits_t), yt);

            StepDiagnostics diag;
            diag.step = state.step();
            diag.stage = 2;
            diag.l_ce_s = ce_s.value;
            diag.l_ce_t = ce_t.value;
            check_finite(ce_s.value + ce_t.value, diag);

            zero_grads(classifier_params);
            state.classify_backward(to_float(ce_s.d_logits), cache_s);
            if (zt.rows() > 0) state.classify_backward(to_float(ce_t.d_logits), cache_t);
            diag.grad_classifier = grad_norm(classifier_params);
            optimizer_step(classifier_params, state.optimizer_state(), config.optimizer);
            state.bump_step();
            diagnostics.push_back(diag);
        }
    }
}

void train_joint(ModelState& state, const DomainDataset& src, const DomainDataset& trg,
                 const TargetPartition& part, const TrainConfig& config,
                 std::vector<StepDiagnostics>& diagnostics) {
    const int epochs = config.epochs_stage1 + config.epochs_stage2;
    if (epochs == 0) return;
    const double lambda_mmd = config.weights.lambda_mmd;
    const double lambda_ctr = config.weights.lambda_ctr;
    const bool use_ctr = lambda_ctr > 0.0;

    BatchPlan plan(src, trg, part, config.batch_size, derive_seed(config.seed, kBatchStream));
    Rng mixup_rng(derive_seed(config.seed, kMixupStream));

    auto joint_params = state.backbone_params();
    {
        auto head = state.online_head_params();
        joint_params.insert(joint_params.end(), head.begin(), head.end());
        auto cls = state.classifier_params();
        joint_params.insert(joint_params.end(), cls.begin(), cls.end());
    }
    auto backbone_params = state.backbone_params();
    auto online_params = state.online_head_params();
    auto classifier_params = state.classifier_params();

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto batches = plan.epoch(epoch);
        for (const PairedBatch& batch : batches) {
            const int b_lab = static_cast<int>(batch.trg_lab_y.size());

            FeatureCache cache_src, cache_trg;
            const MatXf z_src = state.forward_features(batch.src_x, cache_src, /*train=*/true);
            const Tensor3f trg_x = concat_rows(batch.trg_lab_x, batch.trg_unl_x);
            const MatXf z_trg = state.forward_features(trg_x, cache_trg, /*train=*/true);
            if (!z_src.allFinite() || !z_trg.allFinite()) {
                StepDiagnostics snapshot;
                snapshot.step = state.step();
                snapshot.stage = 0;
                throw TrainingAbort("training aborted: non-finite features at step " +
                                        std::to_string(state.step()),
                                    snapshot);
            }

            const auto mmd = mmd_loss_grad(to_double(z_src), to_double(z_trg), config.kernel);

            MatXf labeled(z_src.rows() + b_lab, z_src.cols());
            labeled << z_src, z_trg.topRows(b_lab);
            Mlp2<float>::Cache online_cache;
            const MatXf anchors_emb = state.project_online(labeled, online_cache);
            const MatXf keys_emb = state.project_momentum(labeled);
            LatentBatch anchors =
                make_labeled_batch(to_double(anchors_emb), batch.src_y, batch.trg_lab_y);
            LatentBatch keys =
                make_labeled_batch(to_double(keys_emb), batch.src_y, batch.trg_lab_y);
            if (use_ctr)
                keys = LatentBatch::concat(
                    keys, sample_mixup_batch(keys, config.weights.alpha, mixup_rng));
            const auto ctr =
                supervised_contrastive_loss_grad(anchors, keys, config.weights.tau, true);

            Linear<float>::Cache cache_cs, cache_ct;
            const MatXf logits_s = state.classify(z_src, cache_cs);
            const MatXf logits_t = state.classify(z_trg.topRows(b_lab), cache_ct);
            const auto ce_s = cross_entropy_grad(to_double(logits_s), batch.src_y);
            const auto ce_t = cross_entropy_grad(to_double(logits_t), batch.trg_lab_y);

            StepDiagnostics diag;
            diag.step = state.step();
            diag.stage = 0;
            diag.l_mmd = mmd.value;
            diag.l_ctr = ctr.value;
            diag.l_ce_s = ce_s.value;
            diag.l_ce_t = ce_t.value;
            diag.anchors_without_positives = ctr.anchors_without_positives;
            const double total =
                lambda_mmd * mmd.value + lambda_ctr * ctr.value + ce_s.value + ce_t.value;
            check_finite(total, diag);

            zero_grads(joint_params);
            MatXf d_src = to_float(lambda_mmd * mmd.d_src);
            MatXf d_trg = to_float(lambda_mmd * mmd.d_trg);
            if (use_ctr && ctr.d_anchors.size() > 0) {
                const MatXf d_labeled =
                    state.online_backward(to_float(lambda_ctr * ctr.d_anchors), online_cache);
                d_src += d_labeled.topRows(z_src.rows());
                d_trg.topRows(b_lab) += d_labeled.bottomRows(b_lab);
            }
            d_src += state.classify_backward(to_float(ce_s.d_logits), cache_cs);
            d_trg.topRows(b_lab) += state.classify_backward(to_float(ce_t.d_logits), cache_ct);
            state.features_backward(d_trg, cache_trg);
            state.features_backward(d_src, cache_src);

            diag.grad_backbone = grad_norm(backbone_params);
            diag.grad_online = grad_norm(online_params);
            diag.grad_classifier = grad_norm(classifier_params);
            optimizer_step(joint_params, state.optimizer_state(), config.optimizer);
            if (config.ema_enabled) state.heads().ema_update(config.weights.momentum);
            state.bump_step();
            diagnostics.push_back(diag);
        }
    }
}

void train_source_only(ModelState& state, const DomainDataset& src, const TrainConfig& config,
                       std::vector<StepDiagnostics>& diagnostics) {
    const int epochs = config.epochs_stage1 + config.epochs_stage2;
    auto params = state.backbone_params();
    {
        auto cls = state.classifier_params();
        params.insert(params.end(), cls.begin(), cls.end());
    }
    auto backbone_params = state.backbone_params();
    auto classifier_params = state.classifier_params();

    const int steps = (src.n_train() + config.batch_size - 1) / config.batch_size;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, kSourceOnlyStream + static_cast<std::uint64_t>(epoch)));
        std::vector<int> order(src.n_train());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        while (static_cast<int>(order.size()) < steps * config.batch_size)
            order.push_back(static_cast<int>(rng.uniform_int(src.n_train())));

        for (int b = 0; b < steps; ++b) {
            std::vector<int> rows(order.begin() + static_cast<std::ptrdiff_t>(b) * config.batch_size,
                                  order.begin() +
                                      static_cast<std::ptrdiff_t>(b + 1) * config.batch_size);
            const Tensor3f x = src.normalized_rows(rows);
            Eigen::VectorXi y(static_cast<int>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k)
                y[static_cast<int>(k)] = src.y_train[rows[k]];

            FeatureCache cache;
            const MatXf z = state.forward_features(x, cache, /*train=*/true);
            Linear<float>::Cache cache_c;
            const MatXf logits = state.classify(z, cache_c);
            const auto ce = cross_entropy_grad(to_double(logits), y);

            StepDiagnostics diag;
            diag.step = state.step();
            diag.stage = 0;
            diag.l_ce_s = ce.value;
            check_finite(ce.value, diag);

            zero_grads(params);
            const MatXf d_z = state.classify_backward(to_float(ce.d_logits), cache_c);
            state.features_backward(d_z, cache);
            diag.grad_backbone = grad_norm(backbone_params);
            diag.grad_classifier = grad_norm(classifier_params);
            optimizer_step(params, state.optimizer_state(), config.optimizer);
            state.bump_step();
            diagnostics.push_back(diag);
        }
    }
}

void write_diagnostics_csv(const std::vector<StepDiagnostics>& diagnostics,
                           const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "step,stage,l_mmd,l_ctr,l_ce_s,l_ce_t,anchors_without_positives,"
           "grad_backbone,grad_online,grad_classifier\n";
    out << std::setprecision(10);
    for (const auto& d : diagnostics)
        out << d.step << ',' << d.stage << ',' << d.l_mmd << ',' << d.l_ctr << ',' << d.l_ce_s
            << ',' << d.l_ce_t << ',' << d.anchors_without_positives << ',' << d.grad_backbone
            << ',' << d.grad_online << ',' << d.grad_classifier << "\n";
}

ScenarioResult run_experiment_on(const TrainConfig& config, const DomainDataset& src,
                                 const DomainDataset& trg, const std::filesystem::path& out_dir,
                                 const std::string& resolved_config_json) {
    config.validate();
    require(src.channels == trg.channels && src.seq_len == trg.seq_len &&
                src.num_classes == trg.num_classes,
            "run_experiment: source and target dims/label space must match");

    std::filesystem::create_directories(out_dir);
    BackboneSpec spec{config.backbone_kind(), src.channels, src.seq_len, config.feature_dim};
    ModelState state = ModelState::create(spec, src.num_classes, config.proj_dim, config.seed);

    std::vector<StepDiagnostics> diagnostics;
    if (config.mode == TrainMode::source_only) {
        train_source_only(state, src, config, diagnostics);
    } else {
        const TargetPartition part = apply_unlabeled_ratio(trg, config.u, config.seed);
        if (config.mode == TrainMode::joint) {
            train_joint(state, src, trg, part, config, diagnostics);
        } else {
            train_stage1(state, src, trg, part, config, diagnostics);
            train_stage2(state, src, trg, part, config, diagnostics);
        }
    }

    const std::vector<int> pred = predict_test(state, trg);
    ScenarioResult result;
    result.scenario = src.name + "->" + trg.name;
    result.dataset = config.dataset_name.empty() ? result.scenario : config.dataset_name;
    result.u = config.u;
    result.backbone = config.backbone;
    result.mode = to_string(config.mode);
    result.seed = config.seed;
    result.accuracy = accuracy(pred, trg.y_test);
    result.macro_f1 = macro_f1(pred, trg.y_test, trg.num_classes);
    result.per_class = per_class_scores(pred, trg.y_test, trg.num_classes);
    result.confusion = confusion_matrix(pred, trg.y_test, trg.num_classes);
    result.config_hash = sha256_hex(resolved_config_json);

    nlohmann::ordered_json metrics;
    metrics["scenario"] = result.scenario;
    metrics["dataset"] = result.dataset;
    metrics["u"] = result.u;
    metrics["backbone"] = result.backbone;
    metrics["mode"] = result.mode;
    metrics["seed"] = result.seed;
    metrics["accuracy"] = result.accuracy;
    metrics["macro_f1"] = result.macro_f1;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (const auto& s : result.per_class)
        per_class.push_back({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
    metrics["per_class"] = per_class;
    metrics["confusion"] = result.confusion;
    metrics["config"] = nlohmann::ordered_json::parse(resolved_config_json);
    metrics["config_hash"] = result.config_hash;
    std::ofstream mf(out_dir / "metrics.json");
    mf << metrics.dump(2) << "\n";

    write_diagnostics_csv(diagnostics, out_dir / "diagnostics.csv");
    save_checkpoint(state, out_dir / "checkpoint");
    export_features(state, trg, out_dir);
    return result;
}

ScenarioResult run_experiment(const TrainConfig& config, const std::filesystem::path& src_path,
                              const std::filesystem::path& trg_path,
                              const std::filesystem::path& out_dir,
                              const std::string& resolved_config_json) {
    const DomainDataset src = load_dataset(src_path);
    const DomainDataset trg = load_dataset(trg_path);
    return run_experiment_on(config, src, trg, out_dir, resolved_config_json);
}

}  // namespace mossda
