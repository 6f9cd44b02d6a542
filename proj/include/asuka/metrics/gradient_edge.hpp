#pragma once

#include "asuka/core/image.hpp"
#include "asuka/masks/mask.hpp"

namespace asuka::metrics {

// Band around the mask boundary: dilate(mask, w) AND NOT erode(mask, w).
struct BoundaryBand {
    masks::Mask band;
    int width_px = 2;
};

BoundaryBand boundary_band(const masks::Mask& mask, int width_px = 2);

struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gradient@edge: mean over boundary-band pixels and channels of the L1
// difference between forward-difference gradients of pred and gt, computed
// on the [0,255] intensity scale. Forward differences use zero at the last
// row/column.
double gradient_at_edge(const core::Image& pred, const core::Image& gt, const masks::Mask& mask,
                        int band_width_px = 2);

}  // namespace asuka::metrics
