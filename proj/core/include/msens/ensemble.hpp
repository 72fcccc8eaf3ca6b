#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msens/augment.hpp"
#include "msens/nn.hpp"
#include "msens/train.hpp"

namespace msens {

/// Branches share one layer template and differ only in square input size.
struct EnsembleSpec {
    std::vector<int> branch_sizes{512, 384, 256};
    std::vector<LayerSpec> layers = toy_residual_layers();

    static EnsembleSpec toy() { return {{64, 48, 32}, toy_residual_layers()}; }
    void validate() const;
    ModelSpec branch_spec(std::size_t b) const;
};

struct Branch {
    int input_size = 0;
    std::uint64_t seed = 0;
    ModelSpec spec;
    ModelParams params;
    History history;
};

struct EnsembleModel {
    std::vector<Branch> branches;
    /// Decision threshold on the pneumothorax score.
    double cutoff = 0.5;
};

/// Seed for branch b: derive_seed(run_seed, "branch", b). Weights are
/// initialised from derive_seed(branch_seed, "init") and fit() receives
/// branch_seed itself.
std::uint64_t branch_seed(std::uint64_t run_seed, std::size_t b);

/// Initialises and trains one branch at the given input size.
Branch train_branch(const std::vector<LayerSpec>& layers, int input_size, const ImageSet& train,
                    const ImageSet& validation, const TrainConfig& train_config, const AugmentConfig& augment_config,
                    std::uint64_t seed, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Trains every branch independently. With parallel set, branches run on
/// separate threads; they share nothing mutable so results are identical.
EnsembleModel train_ensemble(const ImageSet& train, const ImageSet& validation, const EnsembleSpec& espec,
                             const TrainConfig& train_config, const AugmentConfig& augment_config,
                             std::uint64_t run_seed, bool parallel = false,
                             const std::function<void(std::size_t branch, const EpochLog&)>& on_epoch = {});

struct Prediction {
    std::vector<std::vector<double>> per_branch;
    std::vector<double> averaged;
    double score = 0.0;  // averaged[1]
};

/// Arithmetic mean of branch probability vectors.
Prediction average_predictions(std::vector<std::vector<double>> per_branch);

/// Resizes img to each branch's input and averages the inference-mode softmax outputs.
Prediction predict(const EnsembleModel& model, const GrayImage& img);

/// 1 when score >= cutoff. cutoff must lie in [0, 1].
int classify(const Prediction& pred, double cutoff);

/// Bundle layout: bundle.json plus branch_<b>.msw weight files.
/// metrics_json, when given, is stored verbatim under "metrics".
void save_bundle(const EnsembleModel& model, const std::filesystem::path& dir,
                 const std::string& metrics_json = "{}");
EnsembleModel load_bundle(const std::filesystem::path& dir);

}  // namespace msens
