#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "msens/error.hpp"
#include "msens/imageio.hpp"
#include "msens/random.hpp"

using namespace msens;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("msens_test_imageio_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

GrayImage random_image(Rng& rng, int maxval) {
    GrayImage img(1 + static_cast<int>(rng.uniform_index(17)), 1 + static_cast<int>(rng.uniform_index(13)), maxval);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(rng.uniform_index(static_cast<std::size_t>(maxval) + 1));
    return img;
}

std::vector<ManifestEntry> random_manifest(Rng& rng, std::size_t n) {
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < n; ++i) entries.push_back({"img" + std::to_string(i) + ".pgm", 0});
    // at least one of each class
    entries[0].label = 0;
    entries[1].label = 1;
    const double p = rng.uniform(0.05, 0.95);
    for (std::size_t i = 2; i < n; ++i) entries[i].label = rng.uniform01() < p ? 1 : 0;
    return entries;
}

std::size_t count_label(const std::vector<ManifestEntry>& v, int label) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const auto& e) { return e.label == label; }));
}

}  // namespace

TEST_CASE("P2 parse") {
    const GrayImage img = parse_pgm("P2 2 2 255\n0 128\n255 64\n");
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.max_value == 255);
    CHECK(img.pixels == std::vector<std::uint16_t>{0, 128, 255, 64});
}

TEST_CASE("P5 with the same header and binary payload equals P2") {
    std::string p5 = "P5\n2 2\n255\n";
    p5 += std::string{static_cast<char>(0), static_cast<char>(128), static_cast<char>(255), static_cast<char>(64)};
    CHECK(parse_pgm(p5) == parse_pgm("P2 2 2 255\n0 128\n255 64\n"));
}

TEST_CASE("P2 with too few values is a size mismatch") {
    CHECK_THROWS_AS(parse_pgm("P2 2 2 255\n0 128 255\n"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P2 2 2 255\n0 128 255 1 2\n"), FormatError);
}

TEST_CASE("malformed headers and payloads") {
    CHECK_THROWS_AS(parse_pgm("P3 2 2 255\n0 0 0 0"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P2 0 2 255\n"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P2 1 1 70000\n1"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P2 1 1 10\n11"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P5 2 2 255\n\x01\x02"), FormatError);
    CHECK_THROWS_AS(parse_pgm(""), FormatError);
}

TEST_CASE("comments in the header are skipped") {
    const GrayImage img = parse_pgm("P2\n# made by hand\n2 1\n# max\n9\n3 # trailing\n4\n");
    CHECK(img.pixels == std::vector<std::uint16_t>{3, 4});
}

TEST_CASE("16-bit P5 is big-endian") {
    std::string p5 = "P5 1 1 1000\n";
    p5 += std::string{static_cast<char>(0x03), static_cast<char>(0xE8)};
    CHECK(parse_pgm(p5).pixels[0] == 1000);
}

TEST_CASE("round trip through both encodings") {
    Rng rng(1);
    const fs::path dir = scratch_dir("roundtrip");
    for (int i = 0; i < 200; ++i) {
        const int maxval = (i % 3 == 0) ? 65535 : (i % 3 == 1 ? 255 : 1 + static_cast<int>(rng.uniform_index(4000)));
        const GrayImage img = random_image(rng, maxval);
        for (auto enc : {PgmEncoding::Ascii, PgmEncoding::Binary}) {
            CHECK(parse_pgm(encode_pgm(img, enc)) == img);
        }
        if (i < 10) {
            save_image(img, dir / "a.pgm", PgmEncoding::Ascii);
            save_image(img, dir / "b.pgm", PgmEncoding::Binary);
            CHECK(load_image(dir / "a.pgm") == img);
            CHECK(load_image(dir / "b.pgm") == img);
        }
    }
    CHECK_THROWS_AS(load_image(dir / "missing.pgm"), Error);
}

TEST_CASE("image validation") {
    GrayImage img(2, 2, 10);
    CHECK_NOTHROW(img.validate());
    img.pixels[3] = 11;
    CHECK_THROWS_AS(img.validate(), InvalidArgument);
}

TEST_CASE("manifest parse") {
    const auto m = parse_manifest("a.pgm,0\nb.pgm,1");
    REQUIRE(m.size() == 2);
    CHECK(m[0] == ManifestEntry{"a.pgm", 0});
    CHECK(m[1] == ManifestEntry{"b.pgm", 1});
    CHECK(parse_manifest("").empty());
}

TEST_CASE("manifest label error names the line") {
    try {
        parse_manifest("a.pgm,2");
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_manifest("a.pgm,0\nno-comma"), FormatError);
}

TEST_CASE("manifest file round trip") {
    const fs::path dir = scratch_dir("manifest");
    const std::vector<ManifestEntry> m{{"x/a.pgm", 0}, {"b.pgm", 1}, {"c.pgm", 1}};
    save_manifest(m, dir / "m.csv");
    CHECK(load_manifest(dir / "m.csv") == m);
}

TEST_CASE("split sizes round down") {
    const auto s100 = split_sizes(100);
    CHECK(s100.train == 64);
    CHECK(s100.validation == 16);
    CHECK(s100.test == 20);
    const auto big = split_sizes(64381);
    CHECK(big.test == 12876);
    CHECK(big.validation == 10301);
    CHECK(big.train == 41204);
}

TEST_CASE("split of 100 entries") {
    Rng rng(5);
    const auto entries = random_manifest(rng, 100);
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        const auto s = split_dataset(entries, seed);
        CHECK(s.train.size() == 64);
        CHECK(s.validation.size() == 16);
        CHECK(s.test.size() == 20);
    }
}

TEST_CASE("split is deterministic per seed") {
    Rng rng(6);
    const auto entries = random_manifest(rng, 300);
    const auto a = split_dataset(entries, 12);
    const auto b = split_dataset(entries, 12);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);
    const auto c = split_dataset(entries, 13);
    CHECK((a.test != c.test || a.validation != c.validation));
}

TEST_CASE("split rejects tiny or single-class manifests") {
    std::vector<ManifestEntry> four{{"a", 0}, {"b", 1}, {"c", 0}, {"d", 1}};
    CHECK_THROWS_AS(split_dataset(four, 1), InvalidArgument);
    std::vector<ManifestEntry> one_class{{"a", 0}, {"b", 0}, {"c", 0}, {"d", 0}, {"e", 0}};
    CHECK_THROWS_AS(split_dataset(one_class, 1), InvalidArgument);
    CHECK_NOTHROW(split_dataset(one_class, 1, false));
}

TEST_CASE("property: split partitions and stratifies 1000 random manifests") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 5 + rng.uniform_index(300);
        const auto entries = random_manifest(rng, n);
        const auto s = split_dataset(entries, rng.next());

        std::multiset<std::string> seen;
        for (const auto* list : {&s.train, &s.validation, &s.test})
            for (const auto& e : *list) seen.insert(e.path);
        REQUIRE(seen.size() == n);
        std::set<std::string> unique(seen.begin(), seen.end());
        REQUIRE(unique.size() == n);

        const auto sizes = split_sizes(n);
        REQUIRE(s.test.size() == sizes.test);
        REQUIRE(s.validation.size() == sizes.validation);
        REQUIRE(s.train.size() == sizes.train);

        const std::size_t n1 = count_label(entries, 1);
        for (const auto* list : {&s.train, &s.validation, &s.test}) {
            for (int c = 0; c < 2; ++c) {
                const double exact = static_cast<double>(list->size()) *
                                     static_cast<double>(c == 1 ? n1 : n - n1) / static_cast<double>(n);
                REQUIRE(std::abs(static_cast<double>(count_label(*list, c)) - exact) <= 1.0 + 1e-9);
            }
        }
    }
}

TEST_CASE("subsets keep manifest order") {
    Rng rng(8);
    const auto entries = random_manifest(rng, 80);
    const auto s = split_dataset(entries, 3);
    auto index_of = [&](const ManifestEntry& e) {
        return std::find(entries.begin(), entries.end(), e) - entries.begin();
    };
    for (const auto* list : {&s.train, &s.validation, &s.test})
        for (std::size_t i = 1; i < list->size(); ++i) CHECK(index_of((*list)[i - 1]) < index_of((*list)[i]));
}

TEST_CASE("save and load a split directory") {
    const fs::path root = scratch_dir("split");
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < 20; ++i) entries.push_back({"img" + std::to_string(i) + ".pgm", i % 2});
    const auto s = split_dataset(entries, 4);
    save_split(s, root, root / "split");
    const auto back = load_split(root / "split");
    CHECK(back.seed == 4);
    REQUIRE(back.test.size() == s.test.size());
    for (std::size_t i = 0; i < s.test.size(); ++i) {
        CHECK(back.test[i].label == s.test[i].label);
        CHECK(fs::weakly_canonical(root / "split" / back.test[i].path) == fs::weakly_canonical(root / s.test[i].path));
    }
    CHECK_THROWS_AS(load_split(root / "nowhere"), MissingArtifact);
}
