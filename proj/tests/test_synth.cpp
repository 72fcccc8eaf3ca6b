#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "msens/augment.hpp"
#include "msens/error.hpp"
#include "msens/imageio.hpp"
#include "msens/metrics.hpp"
#include "msens/synth.hpp"

using namespace msens;
namespace fs = std::filesystem;

namespace {

// Fixed detector that knows where the blob would be: mean intensity inside
// the ellipse minus the mean of a surrounding ring. Negatives are scored on a
// blob drawn from the positives' geometry so both classes use the same region.
double region_score(const GrayImage& img, const Blob& blob) {
    double in = 0, out = 0;
    int n_in = 0, n_out = 0;
    Blob ring = blob;
    ring.radius = blob.radius * 1.6;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (blob.contains(x, y)) in += img.at(x, y), ++n_in;
            else if (ring.contains(x, y)) out += img.at(x, y), ++n_out;
        }
    if (n_in == 0 || n_out == 0) return 0.0;
    return in / n_in - out / n_out;
}

double oracle_auc(double contrast, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_negative = 60;
    cfg.n_positive = 60;
    cfg.image_size = 48;
    cfg.blob_radius_min = 3;
    cfg.blob_radius_max = 8;
    cfg.blob_contrast = contrast;
    const SynthDataset d = generate(cfg, seed);
    std::vector<Blob> regions;
    for (const auto& b : d.blobs)
        if (b) regions.push_back(*b);
    std::vector<ScoredSample> s;
    std::size_t next_region = 0;
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const Blob& region = d.blobs[i] ? *d.blobs[i] : regions[next_region++ % regions.size()];
        s.push_back({region_score(d.images[i], region), d.labels[i]});
    }
    return auc(roc_curve(s));
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
    SynthConfig cfg;
    cfg.n_negative = 10;
    cfg.n_positive = 10;
    const SynthDataset a = generate(cfg, 3);
    const SynthDataset b = generate(cfg, 3);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    const SynthDataset c = generate(cfg, 4);
    CHECK(a.images != c.images);
}

TEST_CASE("label balance, pixel range and blob placement") {
    SynthConfig cfg;
    cfg.n_negative = 23;
    cfg.n_positive = 17;
    cfg.image_size = 40;
    cfg.blob_radius_max = 15;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const SynthDataset d = generate(cfg, seed);
        REQUIRE(d.images.size() == 40);
        CHECK(std::count(d.labels.begin(), d.labels.end(), 1) == 17);
        for (std::size_t i = 0; i < d.images.size(); ++i) {
            const auto& img = d.images[i];
            CHECK(img.width == 40);
            CHECK_NOTHROW(img.validate());
            CHECK(d.blobs[i].has_value() == (d.labels[i] == 1));
            if (d.blobs[i]) {
                const Blob& b = *d.blobs[i];
                CHECK(b.radius >= cfg.blob_radius_min);
                CHECK(b.radius <= cfg.blob_radius_max);
                CHECK(b.cx - b.radius >= 0.0);
                CHECK(b.cy - b.radius >= 0.0);
                CHECK(b.cx + b.radius <= 39.0);
                CHECK(b.cy + b.radius <= 39.0);
            }
        }
    }
}

TEST_CASE("config validation") {
    SynthConfig cfg;
    cfg.n_positive = 0;
    CHECK_THROWS_AS(generate(cfg, 1), InvalidArgument);
    cfg = SynthConfig{};
    cfg.blob_radius_min = 0.5;
    CHECK_THROWS_AS(generate(cfg, 1), InvalidArgument);
    cfg = SynthConfig{};
    cfg.blob_radius_max = 64;
    CHECK_THROWS_AS(generate(cfg, 1), InvalidArgument);
    cfg = SynthConfig{};
    cfg.blob_contrast = 1.5;
    CHECK_THROWS_AS(generate(cfg, 1), InvalidArgument);
    cfg = SynthConfig{};
    cfg.noise_sigma = -0.1;
    CHECK_THROWS_AS(generate(cfg, 1), InvalidArgument);
}

TEST_CASE("downsampling erases small blobs and keeps large ones") {
    Blob small{64, 64, 2.0, 1.0, 0.0};
    Blob large{64, 64, 10.0, 1.0, 0.0};
    auto surviving = [](const Blob& b) {
        const GrayImage down = resize_bilinear(blob_mask(b, 128), 32, 32);
        double area = 0;
        int full = 0;
        for (auto p : down.pixels) {
            area += p / 255.0;
            if (p == 255) ++full;
        }
        return std::pair{area, full};
    };
    const auto [small_area, small_full] = surviving(small);
    CHECK(small_area < 1.0);
    CHECK(small_full == 0);
    const auto [large_area, large_full] = surviving(large);
    CHECK(large_area >= 4.0);
    CHECK(large_full >= 4);
}

TEST_CASE("zero contrast carries no signal") {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) sum += oracle_auc(0.0, seed);
    CHECK(std::abs(sum / 5 - 0.5) < 0.08);
}

TEST_CASE("property: more contrast makes the oracle detector better") {
    const std::vector<double> contrasts{0.0, 0.02, 0.05, 0.1, 0.3};
    std::vector<double> mean(contrasts.size(), 0.0);
    for (std::size_t k = 0; k < contrasts.size(); ++k)
        for (std::uint64_t seed = 1; seed <= 4; ++seed) mean[k] += oracle_auc(contrasts[k], seed) / 4;
    for (std::size_t k = 1; k < contrasts.size(); ++k) CHECK(mean[k] > mean[k - 1]);
    CHECK(mean.back() > 0.99);
}

TEST_CASE("written datasets load back") {
    SynthConfig cfg;
    cfg.n_negative = 3;
    cfg.n_positive = 2;
    cfg.image_size = 16;
    cfg.blob_radius_max = 5;
    const SynthDataset d = generate(cfg, 8);
    const fs::path dir = fs::temp_directory_path() / "msens_test_synth";
    fs::remove_all(dir);
    write_dataset(d, dir);
    const auto manifest = load_manifest(dir / "manifest.csv");
    REQUIRE(manifest.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(manifest[i].label == d.labels[i]);
        CHECK(load_image(dir / manifest[i].path) == d.images[i]);
    }
}
