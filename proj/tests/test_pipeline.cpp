#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "msens/error.hpp"
#include "msens/pipeline.hpp"

using namespace msens;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kSmallConfig = R"({
  "seed": 3,
  "output_dir": "run",
  "synth": {"n_negative": 12, "n_positive": 12, "image_size": 24, "blob_radius_range": [3, 6], "blob_contrast": 0.5},
  "train": {"lr0": 0.001, "max_epochs": 2, "phase1_epochs": 1, "batch_size": 8},
  "ensemble": {"branch_sizes": [16, 12, 8],
               "architecture": {"preset": "toy", "stem_channels": 4, "stage_channels": [4, 8, 8]}}
})";

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("msens_test_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text = kSmallConfig) {
    std::ofstream(dir / "config.json") << text;
    return dir / "config.json";
}

}  // namespace

TEST_CASE("config defaults, file values and overrides") {
    const PipelineConfig defaults = parse_pipeline_config("{}", "/base");
    CHECK(defaults.seed == 1);
    CHECK(defaults.output_dir == fs::path("/base/run"));
    CHECK(defaults.data_dir == fs::path("/base/run/data"));
    CHECK(defaults.split_dir == fs::path("/base/run/data/split"));
    CHECK(defaults.ensemble.branch_sizes == std::vector<int>{64, 48, 32});
    CHECK(defaults.cutoff_set == CutoffSet::Validation);

    const PipelineConfig c = parse_pipeline_config(kSmallConfig, "/base", {"train.lr0=0.01", "seed=9", "cutoff_set=test"});
    CHECK(c.train.lr0 == 0.01);
    CHECK(c.train.max_epochs == 2);
    CHECK(c.seed == 9);
    CHECK(c.cutoff_set == CutoffSet::Test);
    CHECK(c.synth.blob_radius_min == 3.0);
    CHECK(c.ensemble.branch_sizes == std::vector<int>{16, 12, 8});
    CHECK(c.ensemble.layers == toy_residual_layers(4, {4, 8, 8}));
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_pipeline_config("{", "."), Error);
    CHECK_THROWS_AS(parse_pipeline_config("{}", ".", {"no_equals"}), InvalidArgument);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"train": {"batch_size": 0}})", "."), InvalidArgument);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"ensemble": {"architecture": {"preset": "huge"}}})", "."), InvalidArgument);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"cutoff_set": "train"})", "."), InvalidArgument);
    CHECK_THROWS_AS(load_pipeline_config("/nonexistent/config.json"), MissingArtifact);
    CHECK_THROWS_AS(cutoff_set_from_name("all"), InvalidArgument);
}

TEST_CASE("config hash tracks content") {
    const PipelineConfig a = parse_pipeline_config(kSmallConfig, "/x");
    const PipelineConfig b = parse_pipeline_config(kSmallConfig, "/y");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != parse_pipeline_config(kSmallConfig, "/x", {"seed=4"}).hash());
}

TEST_CASE("eval before train names the missing bundle") {
    const fs::path dir = fresh_dir("missing");
    try {
        run_eval(dir / "bundle", dir / "split", CutoffSet::Validation, dir / "eval");
        FAIL("expected MissingArtifact");
    } catch (const MissingArtifact& e) {
        const std::string msg = e.what();
        CHECK(msg.find("missing artifact") != std::string::npos);
        CHECK(msg.find("bundle") != std::string::npos);
    }
    CHECK_THROWS_AS(run_predict(dir / "bundle", {}), MissingArtifact);
}

TEST_CASE("full chain on a small preset") {
    const fs::path dir = fresh_dir("chain");
    const PipelineConfig config = load_pipeline_config(write_config(dir));
    run_synth(config, config.seed, {});
    CHECK(fs::exists(config.data_dir / "manifest.csv"));
    CHECK(fs::exists(config.data_dir / "provenance_synth.json"));
    run_split(config.data_dir / "manifest.csv", config.seed, config.split_dir);
    CHECK(fs::exists(config.split_dir / "provenance_split.json"));
    run_train(config, false);
    CHECK(fs::exists(config.output_dir / "bundle" / "bundle.json"));
    CHECK(fs::exists(config.output_dir / "train.log"));
    CHECK(fs::exists(config.output_dir / "run_summary.json"));
    CHECK(fs::exists(config.output_dir / "provenance_train.json"));

    const auto rows = run_eval(config.output_dir / "bundle", config.split_dir, CutoffSet::Validation, dir / "eval");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].model == "Ensemble");
    CHECK(rows[1].model == "Model 16");
    CHECK(rows[3].model == "Model 8");
    for (const auto& r : rows) {
        CHECK(r.auc >= 0.0);
        CHECK(r.auc <= 1.0);
        CHECK(r.acc == (r.sp + r.se) / 2);
    }
    for (const char* f : {"results.json", "report.txt", "roc_ensemble.txt", "roc_model_16.txt", "roc_model_12.txt",
                          "roc_model_8.txt", "provenance_eval.json"})
        CHECK(fs::exists(dir / "eval" / f));
    CHECK(run_report(dir / "eval" / "results.json") == slurp(dir / "eval" / "report.txt"));

    const auto provenance = slurp(dir / "eval" / "provenance_eval.json");
    CHECK(provenance.find("bundle.json") != std::string::npos);
    CHECK(provenance.find("\"seed\"") != std::string::npos);

    const auto test_rows = run_eval(config.output_dir / "bundle", config.split_dir, CutoffSet::Test, dir / "eval_test");
    CHECK(test_rows[0].auc == rows[0].auc);

    std::vector<fs::path> images;
    for (const auto& e : load_manifest(config.data_dir / "manifest.csv"))
        if (e.label == 1) images.push_back(config.data_dir / e.path);
    const auto preds = run_predict(config.output_dir / "bundle", images);
    REQUIRE(preds.size() == images.size());
    const double cutoff = load_bundle(config.output_dir / "bundle").cutoff;
    for (const auto& p : preds) {
        CHECK(p.score >= 0.0);
        CHECK(p.score <= 1.0);
        CHECK(p.decision == (p.score >= cutoff ? 1 : 0));
    }
}

TEST_CASE("augment preview writes next to the source") {
    const fs::path dir = fresh_dir("augment");
    GrayImage img(8, 8, 255, 100);
    save_image(img, dir / "a.pgm");
    const fs::path out = run_augment_preview(dir / "a.pgm", AugmentConfig{}, 1);
    CHECK(out == dir / "a_aug.pgm");
    CHECK(load_image(out).width == 8);
}

#ifdef MSENS_CLI_PATH
TEST_CASE("command line exit status") {
    const fs::path dir = fresh_dir("cli");
    const fs::path cfg = write_config(dir);
    const std::string cli = MSENS_CLI_PATH;
    auto run = [&](const std::string& args) {
        return std::system((cli + " " + args + " > " + (dir / "out.txt").string() + " 2>&1").c_str());
    };
    CHECK(run("") != 0);
    CHECK(run("frobnicate") != 0);
    CHECK(run("eval --bundle " + (dir / "run" / "bundle").string() + " --split " + (dir / "split").string()) != 0);
    CHECK(slurp(dir / "out.txt").find("missing artifact") != std::string::npos);
    CHECK(run("synth --config " + cfg.string()) == 0);
    CHECK(run("split --manifest " + (dir / "run" / "data" / "manifest.csv").string() + " --seed 3") == 0);
    CHECK(run("train --config " + cfg.string() + " --set train.max_epochs=1") == 0);
    CHECK(run("eval --bundle " + (dir / "run" / "bundle").string() + " --split " +
              (dir / "run" / "data" / "split").string() + " --cutoff-set validation") == 0);
    CHECK(slurp(dir / "out.txt").find("Ensemble") != std::string::npos);
    CHECK(run("report --results " + (dir / "run" / "eval" / "results.json").string()) == 0);
    CHECK(run("predict --bundle " + (dir / "run" / "bundle").string() + " --images " +
              (dir / "run" / "data" / "img_00000.pgm").string()) == 0);
    CHECK(slurp(dir / "out.txt").find("img_00000.pgm") != std::string::npos);
    CHECK(run("train --config " + cfg.string() + " --set train.batch_size=0") != 0);
}
#endif
