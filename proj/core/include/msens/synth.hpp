#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "msens/imageio.hpp"

namespace msens {

/// Synthetic radiograph stand-in: smooth multi-scale texture plus noise, with
/// one faint elliptical blob on positives. Blob radii span a range so that
/// strong downsampling erases the small ones.
struct SynthConfig {
    int n_negative = 200;
    int n_positive = 200;
    int image_size = 128;
    double blob_radius_min = 2.0;
    double blob_radius_max = 10.0;
    double blob_contrast = 0.45;   // fraction of the intensity range
    double noise_sigma = 0.03;     // fraction of the intensity range
    std::vector<double> texture_scales{2.0, 4.0, 8.0};  // cycles per image
    double texture_amplitude = 0.08;
    double base_level = 0.45;

    void validate() const;
};

struct Blob {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;       // major semi-axis
    double minor_ratio = 1.0;  // minor / major, in [0.6, 1]
    double angle = 0.0;

    bool contains(double x, double y) const;
};

struct SynthDataset {
    std::vector<GrayImage> images;
    std::vector<int> labels;
    std::vector<std::optional<Blob>> blobs;
};

/// Deterministic in (config, seed). Labels are shuffled; image i is drawn
/// from Rng(derive_seed(seed, "synth-image", i)).
SynthDataset generate(const SynthConfig& config, std::uint64_t seed);

/// 0/max_value mask of a blob on a size x size 8-bit canvas.
GrayImage blob_mask(const Blob& blob, int size);

/// Writes img_<i>.pgm files and manifest.csv (paths relative to dir).
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

}  // namespace msens
