#include "msens/augment.hpp"

#include <algorithm>
#include <cmath>

#include "msens/error.hpp"

namespace msens {

void AugmentConfig::validate() const {
    if (!(rescale_min > 0.0 && rescale_min <= rescale_max))
        throw InvalidArgument("augment: need 0 < rescale_min <= rescale_max");
    if (!(max_crop_frac >= 0.0 && max_crop_frac < 1.0))
        throw InvalidArgument("augment: max_crop_frac must lie in [0, 1)");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw InvalidArgument("augment: flip_prob must lie in [0, 1]");
    if (!(shift_frac >= 0.0 && shift_frac <= 1.0)) throw InvalidArgument("augment: shift_frac must lie in [0, 1]");
}

bool AugmentParams::within(const AugmentConfig& c) const {
    return scale >= c.rescale_min && scale <= c.rescale_max && std::abs(crop_dx) <= c.max_crop_frac &&
           std::abs(crop_dy) <= c.max_crop_frac && std::abs(shift) <= c.shift_frac;
}

AugmentParams sample_params(Rng& rng, const AugmentConfig& config) {
    config.validate();
    AugmentParams p;
    p.flip = rng.bernoulli(config.flip_prob);
    p.scale = rng.uniform(config.rescale_min, config.rescale_max);
    p.crop_dx = rng.uniform(-config.max_crop_frac, config.max_crop_frac);
    p.crop_dy = rng.uniform(-config.max_crop_frac, config.max_crop_frac);
    p.shift = rng.uniform(-config.shift_frac, config.shift_frac);
    return p;
}

namespace {

// Bilinear sample at real coordinates, clamped to the image (edge replication).
double sample_clamped(const GrayImage& img, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
    const double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

std::uint16_t round_pixel(double v, int max_value) {
    return static_cast<std::uint16_t>(std::clamp(std::floor(v + 0.5), 0.0, static_cast<double>(max_value)));
}

}  // namespace

GrayImage apply(const GrayImage& img, const AugmentParams& params) {
    img.validate();
    if (!(params.scale > 0.0)) throw InvalidArgument("augment: scale must be positive");
    const int w = img.width;
    const int h = img.height;
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    const double dx = params.crop_dx * w;
    const double dy = params.crop_dy * h;
    const long shift = std::lround(params.shift * img.max_value);

    GrayImage out(w, h, img.max_value);
    for (int y = 0; y < h; ++y) {
        const double sy = (y - dy - cy) / params.scale + cy;
        for (int x = 0; x < w; ++x) {
            double sx = (x - dx - cx) / params.scale + cx;
            if (params.flip) sx = (w - 1) - sx;
            const long v = static_cast<long>(round_pixel(sample_clamped(img, sx, sy), img.max_value)) + shift;
            out.at(x, y) = static_cast<std::uint16_t>(std::clamp<long>(v, 0, img.max_value));
        }
    }
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    img.validate();
    if (out_w < 1 || out_h < 1) throw InvalidArgument("resize: output size must be positive");
    GrayImage out(out_w, out_h, img.max_value);
    const double rx = static_cast<double>(img.width) / out_w;
    const double ry = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double sy = (y + 0.5) * ry - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * rx - 0.5;
            out.at(x, y) = round_pixel(sample_clamped(img, sx, sy), img.max_value);
        }
    }
    return out;
}

}  // namespace msens
