// msens: command-line entry point for the multi-size ensemble pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "msens/error.hpp"
#include "msens/pipeline.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"Multi-size CNN ensemble for binary radiograph classification"};
    app.require_subcommand(1);

    std::vector<std::string> overrides;
    msens::StageContext ctx;
    ctx.log = &std::cout;

    // synth
    std::string synth_config;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
    synth->add_option("--config", synth_config, "Pipeline configuration file")->required()->check(CLI::ExistingFile);
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Dataset seed (default: config seed)");
    synth->add_option("--out", synth_out, "Output directory (default: config data_dir)");
    synth->add_option("--set", overrides, "Configuration override key=value");

    // split
    std::string split_manifest;
    std::uint64_t split_seed = 0;
    std::string split_out;
    auto* split = app.add_subcommand("split", "Stratified train/validation/test split of a manifest");
    split->add_option("--manifest", split_manifest, "Manifest file (path,label per line)")->required();
    split->add_option("--seed", split_seed, "Split seed")->required();
    split->add_option("--out", split_out, "Output directory (default: <manifest dir>/split)");

    // train
    std::string train_config;
    bool parallel = false;
    auto* train = app.add_subcommand("train", "Train the ensemble and write a bundle");
    train->add_option("--config", train_config, "Pipeline configuration file")->required()->check(CLI::ExistingFile);
    train->add_flag("--parallel-branches", parallel, "Train branches on separate threads");
    train->add_option("--set", overrides, "Configuration override key=value");

    // eval
    std::string eval_bundle, eval_split, eval_cutoff = "validation", eval_out;
    auto* eval = app.add_subcommand("eval", "Evaluate branches and ensemble on the test split");
    eval->add_option("--bundle", eval_bundle, "Ensemble bundle directory")->required();
    eval->add_option("--split", eval_split, "Split directory")->required();
    eval->add_option("--cutoff-set", eval_cutoff, "Subset used to choose cut-offs")
        ->check(CLI::IsMember({"validation", "test"}));
    eval->add_option("--out", eval_out, "Output directory (default: <bundle>/../eval)");

    // predict
    std::string predict_bundle;
    std::vector<std::string> predict_images;
    auto* predict = app.add_subcommand("predict", "Score images with a trained bundle");
    predict->add_option("--bundle", predict_bundle, "Ensemble bundle directory")->required();
    predict->add_option("--images", predict_images, "PGM images")->required();

    // report
    std::string report_results;
    auto* report = app.add_subcommand("report", "Re-render a stored results file");
    report->add_option("--results", report_results, "results.json written by eval")->required();

    // augment (debug)
    std::string aug_image, aug_config;
    std::uint64_t aug_seed = 0;
    auto* augment = app.add_subcommand("augment", "Write one augmented copy of an image next to it");
    augment->add_option("--image", aug_image, "Source PGM")->required()->check(CLI::ExistingFile);
    augment->add_option("--seed", aug_seed, "Augmentation seed");
    augment->add_option("--config", aug_config, "Pipeline configuration file")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const auto config = msens::load_pipeline_config(synth_config, overrides);
            const std::uint64_t seed = synth_seed_opt->count() ? synth_seed : config.seed;
            msens::run_synth(config, seed, synth_out, ctx);
        } else if (*split) {
            msens::run_split(split_manifest, split_seed, split_out, ctx);
        } else if (*train) {
            msens::run_train(msens::load_pipeline_config(train_config, overrides), parallel, ctx);
        } else if (*eval) {
            const fs::path out = eval_out.empty() ? fs::path(eval_bundle).parent_path() / "eval" : fs::path(eval_out);
            msens::run_eval(eval_bundle, eval_split, msens::cutoff_set_from_name(eval_cutoff), out, ctx);
        } else if (*predict) {
            std::vector<fs::path> paths(predict_images.begin(), predict_images.end());
            for (const auto& p : msens::run_predict(predict_bundle, paths)) {
                std::printf("%s %.6f %d\n", p.path.c_str(), p.score, p.decision);
            }
        } else if (*report) {
            std::cout << msens::run_report(report_results);
        } else if (*augment) {
            msens::AugmentConfig cfg;
            if (!aug_config.empty()) cfg = msens::load_pipeline_config(aug_config).augment;
            std::cout << msens::run_augment_preview(aug_image, cfg, aug_seed).string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "msens: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
