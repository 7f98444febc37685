// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. argv[1] must point at the mossda CLI binary (used by the
// byte-level determinism criterion).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mossda/checkpoint.hpp"
#include "mossda/config.hpp"
#include "mossda/heads.hpp"
#include "mossda/losses.hpp"
#include "mossda/trainer.hpp"
#include "test_util.hpp"

using namespace mossda;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path work_dir(const std::string& leaf) {
    const auto dir = fs::temp_directory_path() / "mossda_acceptance" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---- independent oracles (duplicated here on purpose; they must not share
// code with the implementation under test) ----

double oracle_mmd(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, bool rbf, double gamma) {
    auto k = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
        return rbf ? std::exp(-gamma * (a - b).squaredNorm()) : a.dot(b);
    };
    const int bs = static_cast<int>(zs.rows()), bt = static_cast<int>(zt.rows());
    double kss = 0, ktt = 0, kst = 0;
    for (int i = 0; i < bs; ++i)
        for (int j = 0; j < bs; ++j) kss += k(zs.row(i), zs.row(j));
    for (int i = 0; i < bt; ++i)
        for (int j = 0; j < bt; ++j) ktt += k(zt.row(i), zt.row(j));
    for (int i = 0; i < bs; ++i)
        for (int j = 0; j < bt; ++j) kst += k(zs.row(i), zt.row(j));
    return kss / (double(bs) * bs) - 2 * kst / (double(bs) * bt) + ktt / (double(bt) * bt);
}

double oracle_supcon(const Eigen::MatrixXd& a, const Eigen::VectorXi& al, const Eigen::MatrixXd& k,
                     const Eigen::VectorXi& kl, double tau) {
    double total = 0.0;
    int counted = 0;
    for (int i = 0; i < a.rows(); ++i) {
        double num = 0, den = 0;
        int positives = 0;
        for (int j = 0; j < k.rows(); ++j) {
            if (j == i) continue;
            const double na = std::max(a.row(i).norm(), 1e-8);
            const double nk = std::max(k.row(j).norm(), 1e-8);
            const double e = std::exp(a.row(i).dot(k.row(j)) / (na * nk) / tau);
            den += e;
            if (kl[j] == al[i]) {
                num += e;
                ++positives;
            }
        }
        if (positives == 0) continue;
        total += -std::log(num / den);
        ++counted;
    }
    return counted ? total / counted : 0.0;
}

double oracle_ce(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
    double total = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        double z = 0;
        for (int j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j));
        total += -std::log(std::exp(logits(i, labels[i])) / z);
    }
    return total / logits.rows();
}

LatentBatch labeled_batch(const Eigen::MatrixXd& emb, const Eigen::VectorXi& labels) {
    LatentBatch b;
    b.embeddings = emb;
    b.labels = labels;
    b.domain.assign(emb.rows(), Domain::source);
    b.origin.assign(emb.rows(), Origin::real);
    return b;
}

// ---- the desk-scale benchmark: C=4, D=3, T=64, 200 train rows per domain,
// moderate shift (target amplitude 1.5, phase +0.8 rad, twice the noise) ----

SyntheticSpec benchmark_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.channels = 3;
    spec.seq_len = 64;
    spec.train_per_class = 50;
    spec.test_per_class = 50;
    spec.seed = seed;
    spec.source.amplitude = {1.0};
    spec.source.phase_offset = 0.0;
    spec.source.noise_sigma = 0.4;
    spec.target.amplitude = {1.5};
    spec.target.phase_offset = 0.8;
    spec.target.noise_sigma = 0.8;
    return spec;
}

TrainConfig benchmark_config(TrainMode mode, std::uint64_t seed) {
    TrainConfig config;
    config.backbone = "cnn";
    config.feature_dim = 64;
    config.proj_dim = 32;
    config.batch_size = 32;
    config.epochs_stage1 = 40;
    config.epochs_stage2 = 40;
    config.u = 0.9;
    config.mode = mode;
    config.seed = seed;
    return config;
}

const std::vector<std::uint64_t> kBenchSeeds = {11, 23, 47};

struct BenchCache {
    std::map<std::pair<std::string, std::uint64_t>, ScenarioResult> results;

    const ScenarioResult& get(TrainMode mode, std::uint64_t seed) {
        const auto key = std::make_pair(to_string(mode), seed);
        auto it = results.find(key);
        if (it != results.end()) return it->second;
        const auto [src, trg] = generate_synthetic(benchmark_spec(seed));
        const TrainConfig config = benchmark_config(mode, seed);
        const auto out = work_dir("bench_" + key.first + "_" + std::to_string(seed));
        ScenarioResult r =
            run_experiment_on(config, src, trg, out, resolved_config_json(config));
        return results.emplace(key, std::move(r)).first->second;
    }

    double mean_accuracy(TrainMode mode) {
        double sum = 0;
        for (auto seed : kBenchSeeds) sum += get(mode, seed).accuracy;
        return sum / kBenchSeeds.size();
    }

    double mean_f1(TrainMode mode) {
        double sum = 0;
        for (auto seed : kBenchSeeds) sum += get(mode, seed).macro_f1;
        return sum / kBenchSeeds.size();
    }
};

BenchCache bench;

// ---- criteria ----

bool criterion_loss_oracles(std::string& detail) {
    const auto start = Clock::now();
    Rng rng(2024);
    int checked = 0;
    for (int it = 0; it < 100; ++it) {
        const int bs = 1 + static_cast<int>(rng.uniform_int(16));
        const int bt = 1 + static_cast<int>(rng.uniform_int(16));
        const int d = 1 + static_cast<int>(rng.uniform_int(8));
        const Eigen::MatrixXd zs = testutil::random_matrix(bs, d, rng);
        const Eigen::MatrixXd zt = testutil::random_matrix(bt, d, rng);
        const double gamma = 0.2 + rng.uniform01();

        if (std::abs(mmd_loss(zs, zt, {KernelKind::linear, {}}) -
                     oracle_mmd(zs, zt, false, 0)) > 1e-5)
            return false;
        if (std::abs(mmd_loss(zs, zt, {KernelKind::rbf, gamma}) -
                     oracle_mmd(zs, zt, true, gamma)) > 1e-5)
            return false;

        const int n = 2 + static_cast<int>(rng.uniform_int(14));
        const Eigen::MatrixXd emb = testutil::random_matrix(n, d, rng);
        const Eigen::VectorXi labels = testutil::random_labels(n, 3, rng);
        const double tau = 0.2 + rng.uniform01();
        const LatentBatch batch = labeled_batch(emb, labels);
        if (std::abs(supervised_contrastive_loss(batch, batch, tau).value -
                     oracle_supcon(emb, labels, emb, labels, tau)) > 1e-5)
            return false;

        const int c = 2 + static_cast<int>(rng.uniform_int(6));
        const Eigen::MatrixXd logits = testutil::random_matrix(n, c, rng, 3.0);
        const Eigen::VectorXi y = testutil::random_labels(n, c, rng);
        if (std::abs(cross_entropy(logits, y) - oracle_ce(logits, y)) > 1e-5) return false;
        ++checked;
    }
    const double elapsed = seconds_since(start);
    std::ostringstream os;
    os << checked << " instances per loss, " << elapsed << " s";
    detail = os.str();
    return elapsed < 30.0;
}

bool criterion_gradient_checks(std::string& detail) {
    const auto start = Clock::now();
    Rng rng(4048);
    auto fd_ok = [&](const std::function<double(const Eigen::VectorXd&)>& f,
                     const Eigen::VectorXd& x, const Eigen::VectorXd& analytic) {
        const Eigen::VectorXd fd = testutil::finite_difference(f, x, 1e-5);
        return testutil::relative_error(analytic, fd) < 1e-3;
    };

    for (int it = 0; it < 20; ++it) {
        const int bs = 2 + static_cast<int>(rng.uniform_int(5));
        const int bt = 2 + static_cast<int>(rng.uniform_int(5));
        const int d = 2 + static_cast<int>(rng.uniform_int(4));
        Eigen::MatrixXd zs = testutil::random_matrix(bs, d, rng);
        Eigen::MatrixXd zt = testutil::random_matrix(bt, d, rng);

        for (const bool rbf : {false, true}) {
            KernelSpec kernel;
            kernel.kind = rbf ? KernelKind::rbf : KernelKind::linear;
            if (rbf) kernel.rbf_gamma = 0.3 + rng.uniform01();
            const auto res = mmd_loss_grad(zs, zt, kernel);
            Eigen::VectorXd flat(bs * d + bt * d);
            flat << Eigen::Map<const Eigen::VectorXd>(zs.data(), zs.size()),
                Eigen::Map<const Eigen::VectorXd>(zt.data(), zt.size());
            Eigen::VectorXd analytic(flat.size());
            analytic << Eigen::Map<const Eigen::VectorXd>(res.d_src.data(), res.d_src.size()),
                Eigen::Map<const Eigen::VectorXd>(res.d_trg.data(), res.d_trg.size());
            auto f = [&](const Eigen::VectorXd& v) {
                const Eigen::MatrixXd a = Eigen::Map<const Eigen::MatrixXd>(v.data(), bs, d);
                const Eigen::MatrixXd b =
                    Eigen::Map<const Eigen::MatrixXd>(v.data() + bs * d, bt, d);
                return mmd_loss(a, b, kernel);
            };
            if (!fd_ok(f, flat, analytic)) return false;
        }

        const int na = 3 + static_cast<int>(rng.uniform_int(4));
        const int nk = na + static_cast<int>(rng.uniform_int(4));
        const Eigen::MatrixXd a = testutil::random_matrix(na, d, rng);
        const Eigen::MatrixXd k = testutil::random_matrix(nk, d, rng);
        const Eigen::VectorXi al = testutil::random_labels(na, 2, rng);
        const Eigen::VectorXi kl = testutil::random_labels(nk, 2, rng);
        const double tau = 0.3 + rng.uniform01();
        const auto sres =
            supervised_contrastive_loss_grad(labeled_batch(a, al), labeled_batch(k, kl), tau);
        auto sf = [&](const Eigen::VectorXd& v) {
            const Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(v.data(), na, d);
            return supervised_contrastive_loss(labeled_batch(m, al), labeled_batch(k, kl), tau)
                .value;
        };
        if (!fd_ok(sf, Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()),
                   Eigen::Map<const Eigen::VectorXd>(sres.d_anchors.data(),
                                                     sres.d_anchors.size())))
            return false;

        const int c = 2 + static_cast<int>(rng.uniform_int(5));
        const Eigen::MatrixXd logits = testutil::random_matrix(na, c, rng, 2.0);
        const Eigen::VectorXi y = testutil::random_labels(na, c, rng);
        const auto ce = cross_entropy_grad(logits, y);
        auto cf = [&](const Eigen::VectorXd& v) {
            return cross_entropy(Eigen::Map<const Eigen::MatrixXd>(v.data(), na, c), y);
        };
        if (!fd_ok(cf, Eigen::Map<const Eigen::VectorXd>(logits.data(), logits.size()),
                   Eigen::Map<const Eigen::VectorXd>(ce.d_logits.data(), ce.d_logits.size())))
            return false;
    }
    const double elapsed = seconds_since(start);
    std::ostringstream os;
    os << "20 instances per loss and kernel, " << elapsed << " s";
    detail = os.str();
    return elapsed < 120.0;
}

bool criterion_ema(std::string& detail) {
    Rng rng(11);
    ProjectionHeads<double> heads(6, 8, 4, rng);
    for (const double m : {0.0, 0.9, 0.999}) {
        // theta_q fixed; theta_m offset to an initial gap
        double gap0_sq = 0.0;
        for (auto& [q, mm] : heads.ema_pairs())
            for (std::size_t i = 0; i < q.count; ++i) {
                mm.value[i] = q.value[i] + 0.5 + 0.01 * static_cast<double>(i % 7);
                const double g = mm.value[i] - q.value[i];
                gap0_sq += g * g;
            }
        const double gap0 = std::sqrt(gap0_sq);
        for (int k = 1; k <= 100; ++k) {
            heads.ema_update(m);
            double gap_sq = 0.0;
            for (auto& [q, mm] : heads.ema_pairs())
                for (std::size_t i = 0; i < q.count; ++i) {
                    const double g = mm.value[i] - q.value[i];
                    gap_sq += g * g;
                }
            const double expected = std::pow(m, k) * gap0;
            if (std::abs(std::sqrt(gap_sq) - expected) > 1e-6) {
                std::ostringstream os;
                os << "m=" << m << " k=" << k << " gap=" << std::sqrt(gap_sq)
                   << " expected=" << expected;
                detail = os.str();
                return false;
            }
        }
    }
    detail = "m in {0, 0.9, 0.999}, k <= 100";
    return true;
}

std::vector<std::vector<float>> snapshot(std::vector<ParamRef<float>> refs) {
    std::vector<std::vector<float>> out;
    for (const auto& r : refs) out.emplace_back(r.value, r.value + r.count);
    return out;
}

bool criterion_gradient_isolation(std::string& detail) {
    SyntheticSpec spec = benchmark_spec(5);
    spec.train_per_class = 12;
    spec.test_per_class = 4;
    const auto [src, trg] = generate_synthetic(spec);
    TrainConfig config = benchmark_config(TrainMode::two_stage, 5);
    config.epochs_stage1 = 2;
    config.epochs_stage2 = 2;
    config.batch_size = 16;

    ModelState state = ModelState::create({BackboneKind::cnn, 3, 64, config.feature_dim}, 4,
                                          config.proj_dim, config.seed);
    const TargetPartition part = apply_unlabeled_ratio(trg, config.u, config.seed);
    std::vector<StepDiagnostics> diag;

    const auto classifier_before = snapshot(state.classifier_params());
    train_stage1(state, src, trg, part, config, diag);
    if (snapshot(state.classifier_params()) != classifier_before) {
        detail = "classifier moved during stage 1";
        return false;
    }
    const auto backbone_after = snapshot(state.backbone_params());
    const auto online_after = snapshot(state.online_head_params());
    const auto momentum_after = snapshot(state.momentum_head_params());
    train_stage2(state, src, trg, part, config, diag);
    if (snapshot(state.backbone_params()) != backbone_after ||
        snapshot(state.online_head_params()) != online_after ||
        snapshot(state.momentum_head_params()) != momentum_after) {
        detail = "encoder parameters moved during stage 2";
        return false;
    }
    detail = "bit-exact freeze through both stages";
    return true;
}

bool criterion_stop_gradient(std::string& detail) {
    ModelState state = ModelState::create({BackboneKind::cnn, 2, 16, 12}, 3, 6, 77);
    Rng rng(78);
    const MatXf z = testutil::random_matrix(8, 12, rng).cast<float>();
    Eigen::VectorXi labels(8);
    labels << 0, 1, 2, 0, 1, 2, 0, 1;

    auto online = state.online_head_params();
    auto momentum = state.momentum_head_params();
    zero_grads(online);
    zero_grads(momentum);

    Mlp2<float>::Cache cache;
    const MatXf anchors = state.project_online(z, cache);
    const MatXf keys = state.project_momentum(z);
    LatentBatch a = labeled_batch(anchors.cast<double>(), labels);
    LatentBatch k = labeled_batch(keys.cast<double>(), labels);
    const auto res = supervised_contrastive_loss_grad(a, k, 0.5);
    state.online_backward(res.d_anchors.cast<float>(), cache);

    if (grad_norm(momentum) != 0.0) {
        detail = "momentum head accumulated gradient";
        return false;
    }
    if (grad_norm(online) <= 0.0) {
        detail = "online head gradient vanished on a generic batch";
        return false;
    }
    std::ostringstream os;
    os << "|grad theta_m| = 0, |grad theta_q| = " << grad_norm(online);
    detail = os.str();
    return true;
}

bool criterion_margin(std::string& detail) {
    const auto start = Clock::now();
    const double full = bench.mean_accuracy(TrainMode::two_stage);
    const double baseline = bench.mean_accuracy(TrainMode::source_only);
    const double elapsed = seconds_since(start);
    std::ostringstream os;
    os << "two_stage=" << full << " source_only=" << baseline << " margin=" << (full - baseline)
       << " (" << elapsed << " s over " << 2 * kBenchSeeds.size() << " runs)";
    detail = os.str();
    return full - baseline >= 0.10 && elapsed < 300.0;
}

bool criterion_ablation(std::string& detail) {
    const double full_f1 = bench.mean_f1(TrainMode::two_stage);
    const std::vector<TrainMode> ablations = {TrainMode::no_mmd, TrainMode::no_ctr,
                                              TrainMode::no_mixup, TrainMode::joint};
    std::map<std::string, double> drops;
    double max_other = -1e9;
    for (const auto mode : ablations) {
        const double f1 = bench.mean_f1(mode);
        drops[to_string(mode)] = full_f1 - f1;
        if (mode != TrainMode::no_ctr) max_other = std::max(max_other, full_f1 - f1);
        if (f1 > full_f1 + 0.01) {
            std::ostringstream os;
            os << to_string(mode) << " beats the full method by more than 1 point (f1 " << f1
               << " vs " << full_f1 << ")";
            detail = os.str();
            return false;
        }
    }
    std::ostringstream os;
    os << "f1 drops:";
    for (const auto& [mode, drop] : drops) os << " " << mode << "=" << drop;
    detail = os.str();
    return drops["no_ctr"] > max_other;
}

bool criterion_determinism(const fs::path& cli, std::string& detail) {
    const auto root = work_dir("determinism");
    {
        std::ofstream spec(root / "spec.json");
        spec << R"({"classes": 3, "channels": 2, "seq_len": 16, "train_per_class": 10,
                    "test_per_class": 6, "seed": 12,
                    "source": {"noise": 0.3}, "target": {"noise": 0.5, "phase": 0.4}})";
        std::ofstream config(root / "config.json");
        config << R"({"B": 8, "feature_dim": 16, "proj_dim": 8, "epochs_stage1": 2,
                      "epochs_stage2": 2, "u": 0.8, "seed": 9})";
    }
    auto run = [&](const std::string& args) {
        const std::string cmd = cli.string() + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    if (run("generate " + (root / "spec.json").string() + " --out-src " + (root / "src").string() +
            " --out-trg " + (root / "trg").string()) != 0) {
        detail = "generate failed";
        return false;
    }
    const std::string train_tail = (root / "config.json").string() + " --src " +
                                   (root / "src").string() + " --trg " + (root / "trg").string();
    if (run("train " + train_tail + " --out " + (root / "run1").string()) != 0 ||
        run("train " + train_tail + " --out " + (root / "run2").string()) != 0) {
        detail = "train failed";
        return false;
    }
    auto bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string m1 = bytes(root / "run1" / "metrics.json");
    const std::string m2 = bytes(root / "run2" / "metrics.json");
    if (m1.empty() || m1 != m2) {
        detail = "metrics.json differs between identical runs";
        return false;
    }
    detail = "metrics.json byte-identical across consecutive runs";
    return true;
}

bool criterion_datapipe(std::string& detail) {
    Rng rng(31337);
    for (int it = 0; it < 50; ++it) {
        const int c = 2 + static_cast<int>(rng.uniform_int(5));
        const int per_class = 3 + static_cast<int>(rng.uniform_int(40));
        const int d = 1 + static_cast<int>(rng.uniform_int(4));
        const int t = 8 + static_cast<int>(rng.uniform_int(24));
        DomainDataset ds;
        ds.name = "prop";
        ds.channels = d;
        ds.seq_len = t;
        ds.num_classes = c;
        const int n = c * per_class;
        ds.x_train = Tensor3f(n, d, t);
        for (auto& v : ds.x_train.data) v = static_cast<float>(rng.normal() * 3.0 + 1.0);
        ds.y_train.resize(n);
        for (int i = 0; i < n; ++i) ds.y_train[i] = i % c;
        ds.x_test = Tensor3f(2, d, t);
        ds.y_test = {0, c - 1};
        ds.compute_normalization();

        const double u = std::vector<double>{0.7, 0.9, 0.95}[rng.uniform_int(3)];
        const TargetPartition part = apply_unlabeled_ratio(ds, u, rng.next_u64());
        std::set<int> seen(part.labeled_idx.begin(), part.labeled_idx.end());
        for (int idx : part.unlabeled_idx)
            if (!seen.insert(idx).second) {
                detail = "labeled/unlabeled overlap";
                return false;
            }
        if (static_cast<int>(seen.size()) != n) {
            detail = "partition does not cover the dataset";
            return false;
        }
        std::vector<int> per_class_lab(c, 0);
        for (int idx : part.labeled_idx) ++per_class_lab[ds.y_train[idx]];
        for (int cls = 0; cls < c; ++cls)
            if (per_class_lab[cls] < 1) {
                detail = "class lost all labels";
                return false;
            }

        const int batch = 4 + 2 * static_cast<int>(rng.uniform_int(15));
        BatchPlan plan(ds, ds, part, batch, rng.next_u64());
        const auto idx = plan.epoch_indices(0);
        for (int b = 0; b < plan.batches_per_epoch(); ++b)
            if (static_cast<int>(idx.trg_lab[b].size() + idx.trg_unl[b].size()) != batch) {
                detail = "B_l + B_u != B";
                return false;
            }

        const Tensor3f norm = ds.normalized_split(false);
        for (int ch = 0; ch < d; ++ch) {
            double sum = 0, sq = 0;
            const std::size_t count = static_cast<std::size_t>(norm.n) * norm.steps;
            for (int i = 0; i < norm.n; ++i)
                for (int s = 0; s < norm.steps; ++s) {
                    sum += norm.at(i, ch, s);
                    sq += double(norm.at(i, ch, s)) * norm.at(i, ch, s);
                }
            const double mean = sum / count;
            const double stddev = std::sqrt(sq / count - mean * mean);
            if (std::abs(mean) >= 1e-6 || std::abs(stddev - 1.0) >= 1e-6) {
                detail = "normalization tolerance violated";
                return false;
            }
        }
    }
    detail = "50 randomized datasets";
    return true;
}

bool criterion_roundtrips(std::string& detail) {
    // dataset round trip
    const auto [src, trg] = generate_synthetic(benchmark_spec(3));
    const auto dir = work_dir("roundtrip_ds");
    save_dataset(src, dir);
    const DomainDataset back = load_dataset(dir);
    if (back.x_train.data != src.x_train.data || back.y_train != src.y_train ||
        back.x_test.data != src.x_test.data || back.y_test != src.y_test) {
        detail = "dataset round trip not bit-exact";
        return false;
    }

    // checkpoint round trip with live optimizer and batch-norm state
    TrainConfig config = benchmark_config(TrainMode::two_stage, 3);
    config.epochs_stage1 = 1;
    config.epochs_stage2 = 1;
    SyntheticSpec small = benchmark_spec(3);
    small.train_per_class = 10;
    small.test_per_class = 5;
    const auto [s2, t2] = generate_synthetic(small);
    const auto out = work_dir("roundtrip_ckpt");
    run_experiment_on(config, s2, t2, out, resolved_config_json(config));

    ModelState a = load_checkpoint(out / "checkpoint");
    ModelState b = load_checkpoint(out / "checkpoint");
    Rng rng(55);
    Tensor3f x(4, 3, 64);
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    FeatureCache ca, cb;
    const MatXf za = a.forward_features(x, ca, false);
    const MatXf zb = b.forward_features(x, cb, false);
    const MatXf la = a.classify(za);
    const MatXf lb = b.classify(zb);
    if ((za - zb).norm() != 0.0f || (la - lb).norm() != 0.0f) {
        detail = "checkpoint load -> forward not bit-exact";
        return false;
    }
    const auto second = work_dir("roundtrip_ckpt2") / "checkpoint";
    save_checkpoint(a, second);
    std::ifstream f1(out / "checkpoint", std::ios::binary), f2(second, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    if (b1 != b2) {
        detail = "checkpoint save -> load -> save not byte-stable";
        return false;
    }
    detail = "dataset and checkpoint round trips bit-exact";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-mossda-cli>\n";
        return 64;
    }
    const fs::path cli = argv[1];

    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "loss-oracle equivalence", criterion_loss_oracles},
        {2, "gradient checks", criterion_gradient_checks},
        {3, "EMA dynamics", criterion_ema},
        {4, "gradient isolation", criterion_gradient_isolation},
        {5, "stop-gradient contract", criterion_stop_gradient},
        {6, "synthetic end-to-end margin", criterion_margin},
        {7, "ablation direction", criterion_ablation},
        {8, "determinism",
         [&cli](std::string& d) { return criterion_determinism(cli, d); }},
        {9, "data-pipeline invariants", criterion_datapipe},
        {10, "format round-trips", criterion_roundtrips},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        std::string detail;
        bool pass = false;
        try {
            pass = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        if (!pass) ++failures;
        std::printf("criterion %2d (%s): %s%s%s\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    detail.empty() ? "" : " — ", detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
