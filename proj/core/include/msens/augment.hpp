#pragma once

#include "msens/imageio.hpp"
#include "msens/random.hpp"

namespace msens {

struct AugmentConfig {
    double rescale_min = 0.875;
    double rescale_max = 1.125;
    double max_crop_frac = 0.125;
    double flip_prob = 0.5;
    double shift_frac = 0.1;

    void validate() const;
};

/// One draw of augmentation parameters. Crop offsets are fractions of the
/// image width/height; shift is a fraction of the intensity range.
struct AugmentParams {
    bool flip = false;
    double scale = 1.0;
    double crop_dx = 0.0;
    double crop_dy = 0.0;
    double shift = 0.0;

    static AugmentParams identity() { return {}; }
    bool within(const AugmentConfig& config) const;
};

/// Draws flip, scale, crop_dx, crop_dy, shift in that order.
AugmentParams sample_params(Rng& rng, const AugmentConfig& config);

/// flip -> rescale about the centre -> translate -> crop/pad to the original
/// size with edge replication -> add round(shift * max_value), clamped.
/// Geometric resampling is bilinear; no rotation is ever applied.
GrayImage apply(const GrayImage& img, const AugmentParams& params);

/// Bilinear resampling with half-pixel-centre alignment:
/// src = (i + 0.5) * in / out - 0.5, clamped to [0, in - 1]; results are
/// rounded half-up to integers.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

}  // namespace msens
