#include <string>

#include "CLI11.hpp"
#include "mossda/cli_commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mossda: momentum-encoder semi-supervised domain adaptation for time series"};
    app.require_subcommand(1);

    // generate
    std::string spec_file, out_src, out_trg;
    auto* generate = app.add_subcommand("generate", "generate a synthetic source/target pair");
    generate->add_option("spec", spec_file, "synthetic spec JSON file")->required();
    generate->add_option("--out-src", out_src, "output directory, source domain")->required();
    generate->add_option("--out-trg", out_trg, "output directory, target domain")->required();

    // train / ablate share the argument set
    mossda::cli::TrainArgs train_args;
    std::string train_config, train_src, train_trg, train_out, train_mode;
    double train_u = -1.0;
    std::int64_t train_seed = -1;
    auto add_train_options = [&](CLI::App* cmd) {
        cmd->add_option("config", train_config, "experiment config JSON file")->required();
        cmd->add_option("--src", train_src, "source dataset directory")->required();
        cmd->add_option("--trg", train_trg, "target dataset directory")->required();
        cmd->add_option("--out", train_out, "output directory")->required();
        cmd->add_option("--u", train_u, "unlabeled ratio override");
        cmd->add_option("--seed", train_seed, "seed override");
    };
    auto* train = app.add_subcommand("train", "train one scenario");
    add_train_options(train);
    train->add_option("--mode", train_mode,
                      "two_stage | joint | no_mmd | no_ctr | no_mixup | source_only");

    auto* ablate = app.add_subcommand("ablate", "run the five-mode ablation sweep");
    add_train_options(ablate);

    // eval / export-features
    std::string ckpt_file, ckpt_data, ckpt_out;
    auto add_ckpt_options = [&](CLI::App* cmd) {
        cmd->add_option("checkpoint", ckpt_file, "checkpoint file")->required();
        cmd->add_option("dataset", ckpt_data, "dataset directory")->required();
        cmd->add_option("--out", ckpt_out, "output directory")->required();
    };
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    add_ckpt_options(eval);
    auto* export_cmd =
        app.add_subcommand("export-features", "dump test-split features of a checkpoint");
    add_ckpt_options(export_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : mossda::cli::kValidationError;
    }

    if (generate->parsed()) return mossda::cli::cmd_generate(spec_file, out_src, out_trg);

    if (train->parsed() || ablate->parsed()) {
        train_args.config_file = train_config;
        train_args.src_dir = train_src;
        train_args.trg_dir = train_trg;
        train_args.out_dir = train_out;
        if (train_u >= 0.0) train_args.u = train_u;
        if (train_seed >= 0) train_args.seed = static_cast<std::uint64_t>(train_seed);
        if (!train_mode.empty()) train_args.mode = train_mode;
        return train->parsed() ? mossda::cli::cmd_train(train_args)
                               : mossda::cli::cmd_ablate(train_args);
    }

    if (eval->parsed()) return mossda::cli::cmd_eval(ckpt_file, ckpt_data, ckpt_out);
    if (export_cmd->parsed()) return mossda::cli::cmd_export_features(ckpt_file, ckpt_data, ckpt_out);
    return mossda::cli::kValidationError;
}
