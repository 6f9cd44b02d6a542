#pragma once

#include "asuka/core/image.hpp"
#include "asuka/core/rng.hpp"

namespace asuka::sched {

// Max jitter magnitudes; factors are drawn uniformly around identity.
struct ColorJitterParams {
    double brightness = 0.15;
    double contrast = 0.2;
    double saturation = 0.1;
    double hue = 0.03;  // fraction of the hue circle

    void validate() const;
};

// Single-factor primitives, exposed for direct testing. All clamp to [0,1].
core::Image apply_brightness(const core::Image& img, double factor);
core::Image apply_contrast(const core::Image& img, double factor);
core::Image apply_saturation(const core::Image& img, double factor);
core::Image apply_hue(const core::Image& img, double delta);  // delta in hue-circle turns

// Applies the four jitters in a seed-driven random order with factors drawn
// from the params ranges.
core::Image color_jitter(const core::Image& img, core::RngStream& rng,
                         const ColorJitterParams& params);

}  // namespace asuka::sched
