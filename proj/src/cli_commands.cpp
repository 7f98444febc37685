#include "mossda/cli_commands.hpp"

#include <fstream>
#include <iostream>

#include "json.hpp"
#include "mossda/config.hpp"
#include "mossda/manifest.hpp"
#include "mossda/metrics.hpp"
#include "mossda/trainer.hpp"

namespace mossda::cli {

namespace {

TrainConfig resolve_config(const TrainArgs& args) {
    TrainConfig config = load_train_config(args.config_file);
    if (args.u) config.u = *args.u;
    if (args.seed) config.seed = *args.seed;
    if (args.mode) config.mode = train_mode_from_string(*args.mode);
    config.validate();
    return config;
}

RunManifest begin_manifest(const std::string& command, const TrainArgs& args,
                           const TrainConfig& config) {
    RunManifest m;
    m.command = command;
    m.config_path = args.config_file.string();
    m.resolved_config_json = resolved_config_json(config);
    m.seed = config.seed;
    m.inputs_hash = hash_inputs(m.resolved_config_json, {args.config_file,
                                                         args.src_dir / "manifest.json",
                                                         args.trg_dir / "manifest.json"});
    m.started_at = now_iso8601();
    return m;
}

}  // namespace

int cmd_generate(const std::filesystem::path& spec_file, const std::filesystem::path& out_src,
                 const std::filesystem::path& out_trg) {
    SyntheticSpec spec;
    try {
        spec = load_synthetic_spec(spec_file);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    try {
        const auto [src, trg] = generate_synthetic(spec);
        save_dataset(src, out_src);
        save_dataset(trg, out_trg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    std::cout << "wrote " << out_src.string() << " and " << out_trg.string() << "\n";
    return kOk;
}

int cmd_train(const TrainArgs& args) {
    TrainConfig config;
    try {
        config = resolve_config(args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }

    RunManifest manifest = begin_manifest("train", args, config);
    try {
        const ScenarioResult result = run_experiment(config, args.src_dir, args.trg_dir,
                                                     args.out_dir, manifest.resolved_config_json);
        manifest.finished_at = now_iso8601();
        manifest.outcome = "ok";
        write_run_manifest(manifest, args.out_dir);
        std::cout << result.scenario << " mode=" << result.mode << " accuracy=" << result.accuracy
                  << " macro_f1=" << result.macro_f1 << "\n";
        return kOk;
    } catch (const std::exception& e) {
        manifest.finished_at = now_iso8601();
        manifest.outcome = std::string("failed: ") + e.what();
        write_run_manifest(manifest, args.out_dir);
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

int cmd_ablate(const TrainArgs& args) {
    TrainConfig base;
    try {
        base = resolve_config(args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }

    // Fixed sweep order: the full method first, then one ablation per row.
    const std::vector<std::pair<std::string, TrainMode>> sweep = {
        {"proposed", TrainMode::two_stage},
        {"no_mmd", TrainMode::no_mmd},
        {"no_ctr", TrainMode::no_ctr},
        {"no_mixup", TrainMode::no_mixup},
        {"joint", TrainMode::joint},
    };

    struct Row {
        std::string label;
        bool ok = false;
        double accuracy = 0.0;
        double macro_f1 = 0.0;
        std::string error;
    };
    std::vector<Row> rows;

    DomainDataset src, trg;
    try {
        src = load_dataset(args.src_dir);
        trg = load_dataset(args.trg_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }

    bool any_failed = false;
    for (const auto& [label, mode] : sweep) {
        TrainConfig config = base;
        config.mode = mode;  // shared seed, hence shared partition
        Row row;
        row.label = label;
        try {
            const std::string resolved = resolved_config_json(config);
            const ScenarioResult r =
                run_experiment_on(config, src, trg, args.out_dir / label, resolved);
            row.ok = true;
            row.accuracy = r.accuracy;
            row.macro_f1 = r.macro_f1;
        } catch (const std::exception& e) {
            row.error = e.what();
            any_failed = true;
            std::cerr << "ablation '" << label << "' failed: " << e.what() << "\n";
        }
        rows.push_back(row);
    }

    std::filesystem::create_directories(args.out_dir);
    std::ofstream out(args.out_dir / "ablation_summary.csv");
    out << "mode,accuracy,acc_diff,macro_f1,f1_diff,status\n";
    const Row& proposed = rows.front();
    for (const Row& row : rows) {
        out << row.label << ',';
        if (row.ok && proposed.ok) {
            out << row.accuracy << ',' << (proposed.accuracy - row.accuracy) << ','
                << row.macro_f1 << ',' << (proposed.macro_f1 - row.macro_f1) << ",ok\n";
        } else if (row.ok) {
            out << row.accuracy << ",," << row.macro_f1 << ",,ok\n";
        } else {
            out << ",,,,failed: " << row.error << "\n";
        }
    }
    out.close();
    std::cout << "wrote " << (args.out_dir / "ablation_summary.csv").string() << "\n";
    return any_failed ? kRuntimeError : kOk;
}

namespace {

int run_on_checkpoint(const std::filesystem::path& checkpoint,
                      const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& out_dir, bool export_only) {
    ModelState state;
    DomainDataset ds;
    try {
        state = load_checkpoint(checkpoint);
        ds = load_dataset(dataset_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    if (ds.channels != state.spec().in_channels || ds.seq_len != state.spec().seq_len) {
        std::cerr << "error: dataset is " << ds.channels << "x" << ds.seq_len
                  << " but checkpoint expects " << state.spec().in_channels << "x"
                  << state.spec().seq_len << "\n";
        return kValidationError;
    }
    try {
        std::filesystem::create_directories(out_dir);
        if (export_only) {
            export_features(state, ds, out_dir);
            std::cout << "wrote " << (out_dir / "features_test.f32").string() << "\n";
            return kOk;
        }
        const std::vector<int> pred = predict_test(state, ds);
        nlohmann::ordered_json metrics;
        metrics["dataset"] = ds.name;
        metrics["accuracy"] = accuracy(pred, ds.y_test);
        metrics["macro_f1"] = macro_f1(pred, ds.y_test, ds.num_classes);
        nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
        for (const auto& s : per_class_scores(pred, ds.y_test, ds.num_classes))
            per_class.push_back({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
        metrics["per_class"] = per_class;
        metrics["confusion"] = confusion_matrix(pred, ds.y_test, ds.num_classes);
        std::ofstream out(out_dir / "metrics.json");
        out << metrics.dump(2) << "\n";
        std::cout << "accuracy=" << metrics["accuracy"] << " macro_f1=" << metrics["macro_f1"]
                  << "\n";
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

}  // namespace

int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
             const std::filesystem::path& out_dir) {
    return run_on_checkpoint(checkpoint, dataset_dir, out_dir, /*export_only=*/false);
}

int cmd_export_features(const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset_dir,
                        const std::filesystem::path& out_dir) {
    return run_on_checkpoint(checkpoint, dataset_dir, out_dir, /*export_only=*/true);
}

}  // namespace mossda::cli
