#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace msens {

/// Grayscale raster, row-major, top row first.
struct GrayImage {
    int width = 0;
    int height = 0;
    int max_value = 255;
    std::vector<std::uint16_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, int maxval, std::uint16_t fill = 0);

    std::uint16_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint16_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    /// Throws InvalidArgument when dimensions, max_value or pixel range are inconsistent.
    void validate() const;

    bool operator==(const GrayImage&) const = default;
};

enum class PgmEncoding { Ascii, Binary };  // P2, P5

GrayImage load_image(const std::filesystem::path& path);
GrayImage parse_pgm(const std::string& bytes);
void save_image(const GrayImage& img, const std::filesystem::path& path,
                PgmEncoding encoding = PgmEncoding::Binary);
std::string encode_pgm(const GrayImage& img, PgmEncoding encoding);

struct ManifestEntry {
    std::string path;
    int label = 0;  // 0 = normal, 1 = pneumothorax

    bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
std::vector<ManifestEntry> parse_manifest(const std::string& text);
void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

struct DatasetSplit {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> validation;
    std::vector<ManifestEntry> test;
    std::uint64_t seed = 0;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};

/// test = floor(0.2 N), validation = floor(0.2 (N - test)), train = rest.
SplitSizes split_sizes(std::size_t n);

/// Stratified, seeded 80:20 split with a further 20% validation carve-out.
///
/// Per-class counts are chosen so that every subset is within one item of
/// exact proportionality; within each class the entries are Fisher-Yates
/// shuffled with Rng(seed) (class 0 first, then class 1) and dealt to test,
/// validation and train in that order. Subset lists keep manifest order.
DatasetSplit split_dataset(const std::vector<ManifestEntry>& entries, std::uint64_t seed,
                           bool stratify = true);

/// Writes train.csv, validation.csv, test.csv and split.txt into dir.
/// Entry paths are rewritten relative to dir; source_root is the directory
/// the input paths are relative to.
void save_split(const DatasetSplit& split, const std::filesystem::path& source_root,
                const std::filesystem::path& dir);

/// Reads a directory written by save_split. Paths stay relative to dir.
DatasetSplit load_split(const std::filesystem::path& dir);

}  // namespace msens
