#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "msens/augment.hpp"
#include "msens/ensemble.hpp"
#include "msens/synth.hpp"
#include "msens/train.hpp"

namespace msens {

enum class CutoffSet { Validation, Test };

/// Everything a pipeline run needs. Loaded from a JSON file; relative paths
/// resolve against the file's directory.
struct PipelineConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "run";
    std::filesystem::path data_dir;   // synth output; default output_dir/data
    std::filesystem::path split_dir;  // split output; default data_dir/split
    SynthConfig synth;
    AugmentConfig augment;
    TrainConfig train;
    EnsembleSpec ensemble = EnsembleSpec::toy();
    CutoffSet cutoff_set = CutoffSet::Validation;
    bool parallel_branches = false;

    void validate() const;
    /// Canonical JSON of the effective configuration.
    std::string to_json() const;
    std::uint64_t hash() const;
};

/// Applies "dotted.key=value" overrides (value parsed as JSON, falling back
/// to a string) on top of the file; precedence is override > file > default.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {});
PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir,
                                     const std::vector<std::string>& overrides = {});

CutoffSet cutoff_set_from_name(const std::string& name);

/// Stage outputs are written under the given directories; progress goes to log.
struct StageContext {
    std::ostream* log = nullptr;
    std::string version = "0.1.0";
};

/// dataset + manifest.csv in out_dir (default config.data_dir).
void run_synth(const PipelineConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir,
               const StageContext& ctx = {});

/// train/validation/test manifests and split.txt in out_dir.
void run_split(const std::filesystem::path& manifest, std::uint64_t seed, const std::filesystem::path& out_dir,
               const StageContext& ctx = {});

/// Trains the ensemble on config.split_dir and writes the bundle to
/// config.output_dir/bundle, with train.log and run_summary.json next to it.
/// The stored cutoff is chosen on the validation set.
void run_train(const PipelineConfig& config, bool parallel_branches, const StageContext& ctx = {});

struct EvalRow {
    std::string model;
    double cutoff = 0.0;
    double auc = 0.0;
    double sp = 0.0;
    double se = 0.0;
    double acc = 0.0;
};

/// Scores every branch and the ensemble on the split, picks each model's
/// cutoff on cutoff_set and reports test-set AUC/Sp/Se/Acc. Writes
/// results.json, report.txt and roc_<model>.txt into out_dir.
std::vector<EvalRow> run_eval(const std::filesystem::path& bundle, const std::filesystem::path& split_dir,
                              CutoffSet cutoff_set, const std::filesystem::path& out_dir,
                              const StageContext& ctx = {});

struct ImagePrediction {
    std::string path;
    double score = 0.0;
    int decision = 0;
};

std::vector<ImagePrediction> run_predict(const std::filesystem::path& bundle,
                                         const std::vector<std::filesystem::path>& images);

/// Re-renders a results.json written by run_eval as the aligned table.
std::string run_report(const std::filesystem::path& results);

/// Writes <stem>_aug.pgm next to the source image.
std::filesystem::path run_augment_preview(const std::filesystem::path& image, const AugmentConfig& config,
                                          std::uint64_t seed);

}  // namespace msens
