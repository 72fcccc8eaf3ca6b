#include <doctest.h>

#include <cmath>

#include "msens/augment.hpp"
#include "msens/error.hpp"

using namespace msens;

namespace {

GrayImage random_image(Rng& rng, int w, int h, int maxval) {
    GrayImage img(w, h, maxval);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(rng.uniform_index(static_cast<std::size_t>(maxval) + 1));
    return img;
}

GrayImage from_rows(const std::vector<std::vector<int>>& rows, int maxval = 255) {
    GrayImage img(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()), maxval);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) img.at(x, y) = static_cast<std::uint16_t>(rows[y][x]);
    return img;
}

// Scalar evaluation of the half-pixel-centre bilinear formula along one axis.
double resample_1d(const std::vector<double>& v, int out_n, int i) {
    const int in_n = static_cast<int>(v.size());
    double s = (i + 0.5) * in_n / out_n - 0.5;
    if (s < 0) s = 0;
    if (s > in_n - 1) s = in_n - 1;
    const int lo = static_cast<int>(s);
    const int hi = lo + 1 < in_n ? lo + 1 : lo;
    return v[lo] + (v[hi] - v[lo]) * (s - lo);
}

}  // namespace

TEST_CASE("degenerate config gives the identity transform") {
    AugmentConfig cfg{1.0, 1.0, 0.0, 0.0, 0.0};
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto p = sample_params(rng, cfg);
        CHECK_FALSE(p.flip);
        CHECK(p.scale == 1.0);
        CHECK(p.crop_dx == 0.0);
        CHECK(p.crop_dy == 0.0);
        CHECK(p.shift == 0.0);
    }
}

TEST_CASE("default draws satisfy the bounds") {
    AugmentConfig cfg;
    Rng rng(2);
    int flips = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto p = sample_params(rng, cfg);
        REQUIRE(p.within(cfg));
        REQUIRE(p.scale >= 0.875);
        REQUIRE(p.scale <= 1.125);
        REQUIRE(std::abs(p.crop_dx) <= 0.125);
        REQUIRE(std::abs(p.crop_dy) <= 0.125);
        flips += p.flip;
    }
    CHECK(flips > 4700);
    CHECK(flips < 5300);
}

TEST_CASE("same seed gives the same parameter sequence") {
    AugmentConfig cfg;
    Rng a(77), b(77);
    for (int i = 0; i < 100; ++i) {
        const auto p = sample_params(a, cfg);
        const auto q = sample_params(b, cfg);
        CHECK(p.flip == q.flip);
        CHECK(p.scale == q.scale);
        CHECK(p.crop_dx == q.crop_dx);
        CHECK(p.crop_dy == q.crop_dy);
        CHECK(p.shift == q.shift);
    }
}

TEST_CASE("invalid configs are rejected") {
    Rng rng(0);
    CHECK_THROWS_AS(sample_params(rng, AugmentConfig{1.2, 1.1, 0.1, 0.5, 0.1}), InvalidArgument);
    CHECK_THROWS_AS(sample_params(rng, AugmentConfig{0.9, 1.1, 1.0, 0.5, 0.1}), InvalidArgument);
    CHECK_THROWS_AS(sample_params(rng, AugmentConfig{0.9, 1.1, 0.1, 1.5, 0.1}), InvalidArgument);
    CHECK_THROWS_AS(sample_params(rng, AugmentConfig{0.9, 1.1, 0.1, 0.5, -0.1}), InvalidArgument);
}

TEST_CASE("identity params reproduce the image") {
    Rng rng(3);
    const GrayImage img = random_image(rng, 13, 9, 255);
    CHECK(apply(img, AugmentParams::identity()) == img);
}

TEST_CASE("flip mirrors left and right") {
    AugmentParams p;
    p.flip = true;
    CHECK(apply(from_rows({{1, 2}, {3, 4}}), p) == from_rows({{2, 1}, {4, 3}}));
}

TEST_CASE("shift clamps at the top of the range") {
    AugmentParams p;
    p.shift = 0.1;
    const GrayImage out = apply(from_rows({{250, 10}}), p);
    CHECK(out.at(0, 0) == 255);
    CHECK(out.at(1, 0) == 36);
    p.shift = -0.1;
    CHECK(apply(from_rows({{250, 10}}), p).at(1, 0) == 0);
}

TEST_CASE("constant image resizes to the constant") {
    GrayImage img(5, 7, 255, 77);
    for (auto [w, h] : {std::pair{1, 1}, std::pair{3, 11}, std::pair{20, 4}}) {
        const GrayImage out = resize_bilinear(img, w, h);
        CHECK(out.width == w);
        CHECK(out.height == h);
        for (auto p : out.pixels) CHECK(p == 77);
    }
}

TEST_CASE("same-size resize is the identity") {
    Rng rng(4);
    const GrayImage img = random_image(rng, 9, 6, 1023);
    CHECK(resize_bilinear(img, 9, 6) == img);
}

TEST_CASE("ramp resize matches scalar evaluation of the formula") {
    const GrayImage ramp = from_rows({{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}});
    const std::vector<double> row{0, 1, 2, 3};

    const GrayImage tall = resize_bilinear(ramp, 4, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x) CHECK(tall.at(x, y) == x);

    const GrayImage narrow = resize_bilinear(ramp, 2, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) CHECK(narrow.at(x, y) == static_cast<int>(std::floor(resample_1d(row, 2, x) + 0.5)));
    CHECK(narrow.at(0, 0) == 1);
    CHECK(narrow.at(1, 0) == 3);
}

TEST_CASE("resize rejects empty targets") {
    CHECK_THROWS_AS(resize_bilinear(GrayImage(2, 2, 255), 0, 3), InvalidArgument);
}

TEST_CASE("property: outputs keep dimensions and pixel range") {
    Rng rng(5);
    AugmentConfig wide{0.5, 1.5, 0.4, 0.5, 0.6};
    for (int i = 0; i < 300; ++i) {
        const int maxval = i % 2 ? 255 : 4095;
        const GrayImage img = random_image(rng, 3 + static_cast<int>(rng.uniform_index(20)),
                                           3 + static_cast<int>(rng.uniform_index(20)), maxval);
        const auto p = sample_params(rng, wide);
        const GrayImage out = apply(img, p);
        REQUIRE(out.width == img.width);
        REQUIRE(out.height == img.height);
        for (auto v : out.pixels) REQUIRE(v <= maxval);
        const int w = 1 + static_cast<int>(rng.uniform_index(30)), h = 1 + static_cast<int>(rng.uniform_index(30));
        const GrayImage r = resize_bilinear(img, w, h);
        REQUIRE(r.width == w);
        REQUIRE(r.height == h);
        for (auto v : r.pixels) REQUIRE(v <= maxval);
    }
}

TEST_CASE("property: shift alone adds the rounded offset") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        GrayImage img(6, 5, 255);
        for (auto& p : img.pixels) p = static_cast<std::uint16_t>(60 + rng.uniform_index(130));
        AugmentParams p;
        p.shift = rng.uniform(-0.2, 0.2);
        const int offset = static_cast<int>(std::round(p.shift * 255));
        const GrayImage out = apply(img, p);
        for (std::size_t k = 0; k < img.pixels.size(); ++k) REQUIRE(out.pixels[k] == img.pixels[k] + offset);
    }
}

TEST_CASE("property: flip is an involution") {
    Rng rng(7);
    AugmentParams p;
    p.flip = true;
    for (int i = 0; i < 50; ++i) {
        const GrayImage img = random_image(rng, 1 + static_cast<int>(rng.uniform_index(15)), 4, 255);
        CHECK(apply(apply(img, p), p) == img);
    }
}

TEST_CASE("no rotation: a horizontal edge stays horizontal") {
    // top half dark, bottom half bright; any rescale, crop or flip keeps rows uniform
    GrayImage img(16, 16, 255);
    for (int y = 8; y < 16; ++y)
        for (int x = 0; x < 16; ++x) img.at(x, y) = 200;
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        const GrayImage out = apply(img, sample_params(rng, AugmentConfig{}));
        for (int y = 0; y < 16; ++y)
            for (int x = 1; x < 16; ++x) REQUIRE(out.at(x, y) == out.at(0, y));
    }
}

TEST_CASE("translation moves content by the crop offset") {
    GrayImage img(8, 8, 255);
    img.at(3, 4) = 200;
    AugmentParams p;
    p.crop_dx = 0.25;  // two pixels right
    p.crop_dy = -0.125;  // one pixel up
    const GrayImage out = apply(img, p);
    CHECK(out.at(5, 3) == 200);
    CHECK(out.at(3, 4) == 0);
}
