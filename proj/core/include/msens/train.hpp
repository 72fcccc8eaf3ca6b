#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "msens/augment.hpp"
#include "msens/imageio.hpp"
#include "msens/loss.hpp"
#include "msens/nn.hpp"

namespace msens {

struct TrainConfig {
    double lr0 = 1e-4;
    double decay = 1e-8;
    double rho = 0.9;
    double epsilon = 1e-8;
    int batch_size = 16;
    int patience = 3;
    int max_epochs = 30;
    int phase1_epochs = 3;
    /// Index of the schedule: false -> update steps, true -> epochs.
    bool decay_per_epoch = false;
    /// First layer trained during phase 1; negative selects the layer after
    /// the last global average pool.
    int head_start = -1;
    /// Worker threads for per-example gradients; results do not depend on it.
    int threads = 1;

    void validate() const;
};

struct RmsState {
    ModelParams mean_sq;
    std::uint64_t step = 0;   // updates applied so far
    std::uint64_t epoch = 0;  // schedule index when decay_per_epoch is set

    static RmsState for_params(const ModelParams& params);
};

/// lr0 / (1 + decay * t).
double learning_rate(const TrainConfig& config, std::uint64_t t);

/// One RMSprop update of every trainable tensor:
///   E <- rho E + (1 - rho) g^2,  theta <- theta - lr_t g / (sqrt(E) + epsilon)
/// with t the step count before the update. Frozen layers keep both their
/// values and their accumulators. Increments state.step.
void rmsprop_step(ModelParams& params, const ModelParams& grads, RmsState& state, const TrainConfig& config);

struct EpochRecord {
    double train_loss = 0.0;
    double val_loss = 0.0;
    int phase = 2;
    double lr = 0.0;
};

struct History {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // zero-based; earliest minimum of val_loss
    bool stopped_early = false;

    void record(const EpochRecord& r);
};

enum class StopDecision { Continue, Stop };

/// Stop once the last `patience` epochs each failed to strictly improve on
/// the best validation loss seen before them.
StopDecision early_stop(const History& history, int patience);

struct ImageSet {
    std::vector<GrayImage> images;
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

/// Loads the images a manifest refers to; relative paths resolve against root.
ImageSet load_image_set(const std::vector<ManifestEntry>& entries, const std::filesystem::path& root);

struct EpochLog {
    int epoch = 0;  // one-based
    int phase = 1;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double elapsed_seconds = 0.0;
};

struct FitResult {
    ModelParams params;
    History history;
    RmsState optimizer;
};

/// Trains a single model on square-resized images.
///
/// Phase 1 (phase1_epochs) trains only the head layers, phase 2 everything.
/// Each epoch shuffles the training set, draws fresh augmentation parameters
/// per image (augmentation happens at source resolution, then the result is
/// resized to the model input) and scores unaugmented validation images in
/// inference mode. Early stopping only fires once phase 2 has run `patience`
/// epochs; the returned parameters are the best-validation checkpoint.
/// Shuffle, augmentation and dropout streams derive from seed.
FitResult fit(const ModelSpec& spec, const ModelParams& init, const ImageSet& train, const ImageSet& validation,
              const TrainConfig& train_config, const AugmentConfig& augment_config, std::uint64_t seed,
              const std::function<void(const EpochLog&)>& on_epoch = {});

/// Resizes each image to the model input and converts it to a tensor.
std::vector<Tensor> prepare_inputs(const ModelSpec& spec, const std::vector<GrayImage>& images);

/// Mean cross-entropy in inference mode.
double evaluate_loss(const ModelSpec& spec, const ModelParams& params, const std::vector<Tensor>& inputs,
                     const std::vector<int>& labels);

/// Weight container followed by the optimizer state and epoch counter.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params,
                     const RmsState& state);

struct Checkpoint {
    ModelSpec spec;
    ModelParams params;
    RmsState state;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msens
