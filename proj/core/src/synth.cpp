#include "msens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "msens/error.hpp"
#include "msens/random.hpp"

namespace msens {

void SynthConfig::validate() const {
    if (n_negative < 1 || n_positive < 1) throw InvalidArgument("synth: class counts must be at least 1");
    if (image_size < 8) throw InvalidArgument("synth: image_size must be at least 8");
    if (!(blob_radius_min >= 1.0 && blob_radius_min <= blob_radius_max && blob_radius_max < image_size / 2.0 - 1.0))
        throw InvalidArgument("synth: need 1 <= blob_radius_min <= blob_radius_max < image_size/2 - 1");
    if (!(blob_contrast >= 0.0 && blob_contrast <= 1.0)) throw InvalidArgument("synth: blob_contrast must lie in [0, 1]");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 1.0)) throw InvalidArgument("synth: noise_sigma must lie in [0, 1]");
    if (!(texture_amplitude >= 0.0 && texture_amplitude <= 1.0))
        throw InvalidArgument("synth: texture_amplitude must lie in [0, 1]");
    if (!(base_level >= 0.0 && base_level <= 1.0)) throw InvalidArgument("synth: base_level must lie in [0, 1]");
    for (double s : texture_scales)
        if (!(s > 0.0)) throw InvalidArgument("synth: texture scales must be positive");
}

bool Blob::contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / radius;
    const double v = (-dx * s + dy * c) / (radius * minor_ratio);
    return u * u + v * v <= 1.0;
}

namespace {

struct Wave {
    double freq, amplitude, cos_t, sin_t, phase;
};

GrayImage render(const SynthConfig& cfg, Rng& rng, const std::optional<Blob>& blob, double contrast) {
    const int n = cfg.image_size;
    std::vector<Wave> waves;
    for (double f : cfg.texture_scales) {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        // lower frequencies carry more energy
        waves.push_back({f, cfg.texture_amplitude / std::sqrt(f), std::cos(theta), std::sin(theta),
                         rng.uniform(0.0, 2.0 * std::numbers::pi)});
    }
    GrayImage img(n, n, 255);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double v = cfg.base_level;
            for (const auto& w : waves)
                v += w.amplitude *
                     std::cos(2.0 * std::numbers::pi * w.freq * (x * w.cos_t + y * w.sin_t) / n + w.phase);
            v += cfg.noise_sigma * rng.normal();
            if (blob && blob->contains(x, y)) v += contrast;
            img.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
        }
    }
    return img;
}

}  // namespace

SynthDataset generate(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    const int total = config.n_negative + config.n_positive;
    std::vector<int> labels(static_cast<std::size_t>(total), 0);
    std::fill(labels.begin() + config.n_negative, labels.end(), 1);
    Rng label_rng(derive_seed(seed, "synth-labels"));
    label_rng.shuffle(std::span<int>(labels));

    SynthDataset data;
    data.labels = labels;
    const double n = config.image_size;
    for (int i = 0; i < total; ++i) {
        Rng rng(derive_seed(seed, "synth-image", static_cast<std::uint64_t>(i)));
        std::optional<Blob> blob;
        if (labels[static_cast<std::size_t>(i)] == 1) {
            Blob b;
            b.radius = rng.uniform(config.blob_radius_min, config.blob_radius_max);
            b.minor_ratio = rng.uniform(0.6, 1.0);
            b.angle = rng.uniform(0.0, std::numbers::pi);
            const double margin = b.radius + 1.0;
            b.cx = rng.uniform(margin, n - 1.0 - margin);
            b.cy = rng.uniform(margin, n - 1.0 - margin);
            blob = b;
        }
        data.images.push_back(render(config, rng, blob, config.blob_contrast));
        data.blobs.push_back(blob);
    }
    return data;
}

GrayImage blob_mask(const Blob& blob, int size) {
    GrayImage mask(size, size, 255, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (blob.contains(x, y)) mask.at(x, y) = 255;
    return mask;
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
        save_image(data.images[i], dir / name);
        entries.push_back({name, data.labels[i]});
    }
    save_manifest(entries, dir / "manifest.csv");
}

}  // namespace msens
