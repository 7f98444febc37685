#include "mossda/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace mossda {

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    require(!pred.empty() && pred.size() == truth.size(),
            "accuracy: prediction/truth lengths must match and be nonempty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& pred,
                                               const std::vector<int>& truth, int num_classes) {
    require(pred.size() == truth.size(), "confusion_matrix: length mismatch");
    std::vector<std::vector<int>> m(num_classes, std::vector<int>(num_classes, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred[i] >= 0 && pred[i] < num_classes && truth[i] >= 0 && truth[i] < num_classes,
                "confusion_matrix: label out of range");
        ++m[truth[i]][pred[i]];
    }
    return m;
}

std::vector<ClassScores> per_class_scores(const std::vector<int>& pred,
                                          const std::vector<int>& truth, int num_classes) {
    const auto m = confusion_matrix(pred, truth, num_classes);
    std::vector<ClassScores> scores(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        int tp = m[c][c], fp = 0, fn = 0;
        for (int o = 0; o < num_classes; ++o) {
            if (o == c) continue;
            fp += m[o][c];
            fn += m[c][o];
        }
        ClassScores& s = scores[c];
        s.precision = (tp + fp > 0) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        s.recall = (tp + fn > 0) ? static_cast<double>(tp) / (tp + fn) : 0.0;
        s.f1 = (s.precision + s.recall > 0.0)
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
    }
    return scores;
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int num_classes) {
    const auto scores = per_class_scores(pred, truth, num_classes);
    double sum = 0.0;
    for (const auto& s : scores) sum += s.f1;
    return sum / num_classes;
}

std::vector<GroupSummary> aggregate_scenarios(const std::vector<ScenarioResult>& results) {
    require(!results.empty(), "aggregate_scenarios: empty result list");
    std::vector<GroupSummary> groups;
    auto key_of = [](const ScenarioResult& r) {
        std::ostringstream k;
        k << r.dataset << '|' << r.u << '|' << r.backbone << '|' << r.mode;
        return k.str();
    };
    std::vector<std::string> keys;
    std::vector<std::vector<const ScenarioResult*>> members;
    for (const auto& r : results) {
        const std::string k = key_of(r);
        auto it = std::find(keys.begin(), keys.end(), k);
        if (it == keys.end()) {
            keys.push_back(k);
            members.push_back({&r});
        } else {
            members[static_cast<std::size_t>(it - keys.begin())].push_back(&r);
        }
    }
    for (const auto& group : members) {
        GroupSummary g;
        g.dataset = group.front()->dataset;
        g.u = group.front()->u;
        g.backbone = group.front()->backbone;
        g.mode = group.front()->mode;
        g.count = static_cast<int>(group.size());
        double acc_sum = 0.0, f1_sum = 0.0;
        for (const auto* r : group) {
            acc_sum += r->accuracy;
            f1_sum += r->macro_f1;
        }
        g.mean_acc = acc_sum / g.count;
        g.mean_f1 = f1_sum / g.count;
        double acc_sq = 0.0, f1_sq = 0.0;
        for (const auto* r : group) {
            acc_sq += (r->accuracy - g.mean_acc) * (r->accuracy - g.mean_acc);
            f1_sq += (r->macro_f1 - g.mean_f1) * (r->macro_f1 - g.mean_f1);
        }
        g.std_acc = std::sqrt(acc_sq / g.count);
        g.std_f1 = std::sqrt(f1_sq / g.count);
        groups.push_back(std::move(g));
    }
    return groups;
}

void write_summary_csv(const std::vector<GroupSummary>& groups,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "dataset,u,backbone,mode,mean_acc,std_acc,mean_f1,std_f1\n";
    out << std::setprecision(10);
    for (const auto& g : groups)
        out << g.dataset << ',' << g.u << ',' << g.backbone << ',' << g.mode << ',' << g.mean_acc
            << ',' << g.std_acc << ',' << g.mean_f1 << ',' << g.std_f1 << "\n";
}

std::vector<int> predict_test(ModelState& state, const DomainDataset& dataset) {
    require(dataset.channels == state.spec().in_channels &&
                dataset.seq_len == state.spec().seq_len,
            "predict_test: dataset dims do not match model spec");
    const Tensor3f x = dataset.normalized_split(true);
    std::vector<int> pred(dataset.n_test());
    const int chunk = 256;
    FeatureCache cache;
    for (int start = 0; start < x.n; start += chunk) {
        const int n = std::min(chunk, x.n - start);
        Tensor3f part(n, x.channels, x.steps);
        std::copy_n(x.sample(start), part.size(), part.data.data());
        const MatXf z = state.forward_features(part, cache, /*train=*/false);
        const MatXf logits = state.classify(z);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int c = 1; c < logits.cols(); ++c)
                if (logits(i, c) > logits(i, best)) best = c;
            pred[static_cast<std::size_t>(start + i)] = best;
        }
    }
    return pred;
}

void export_features(ModelState& state, const DomainDataset& dataset,
                     const std::filesystem::path& out_dir) {
    require(dataset.channels == state.spec().in_channels &&
                dataset.seq_len == state.spec().seq_len,
            "export_features: dataset dims do not match model spec");
    std::filesystem::create_directories(out_dir);
    const Tensor3f x = dataset.normalized_split(true);
    FeatureCache cache;
    const MatXf z = state.forward_features(x, cache, /*train=*/false);

    std::ofstream blob(out_dir / "features_test.f32", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open features_test.f32 for writing");
    for (int i = 0; i < z.rows(); ++i)
        for (int j = 0; j < z.cols(); ++j) {
            const float v = z(i, j);
            blob.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    blob.close();

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["n"] = z.rows();
    manifest["feature_dim"] = z.cols();
    manifest["labels"] = dataset.y_test;
    std::ofstream mf(out_dir / "features_manifest.json");
    mf << manifest.dump(2) << "\n";
}

}  // namespace mossda
