#include "asuka/metrics/gradient_edge.hpp"

#include <cmath>

namespace asuka::metrics {

using core::Image;
using masks::Mask;

BoundaryBand boundary_band(const Mask& mask, int width_px) {
    if (width_px < 1) throw std::invalid_argument("boundary_band: width must be >= 1");
    const Mask outer = masks::dilate(mask, width_px);
    const Mask inner = masks::erode(mask, width_px);
    BoundaryBand bb;
    bb.width_px = width_px;
    bb.band = masks::mask_and_not(outer, inner);
    return bb;
}

namespace {
// forward differences on the 0..255 scale; zero past the last row/column
inline double dx_at(const Image& img, std::int64_t r, std::int64_t c, int ch) {
    if (c + 1 >= img.width) return 0.0;
    return 255.0 * (img.at(r, c + 1, ch) - img.at(r, c, ch));
}
inline double dy_at(const Image& img, std::int64_t r, std::int64_t c, int ch) {
    if (r + 1 >= img.height) return 0.0;
    return 255.0 * (img.at(r + 1, c, ch) - img.at(r, c, ch));
}
}  // namespace

double gradient_at_edge(const Image& pred, const Image& gt, const Mask& mask, int band_width_px) {
    if (pred.height != gt.height || pred.width != gt.width || pred.height != mask.height ||
        pred.width != mask.width)
        throw std::invalid_argument("gradient_at_edge: shape mismatch");
    const BoundaryBand bb = boundary_band(mask, band_width_px);
    std::int64_t band_pixels = 0;
    double acc = 0.0;
    for (std::int64_t r = 0; r < mask.height; ++r)
        for (std::int64_t c = 0; c < mask.width; ++c) {
            if (!bb.band.at(r, c)) continue;
            ++band_pixels;
            for (int ch = 0; ch < 3; ++ch) {
                acc += std::abs(dx_at(pred, r, c, ch) - dx_at(gt, r, c, ch)) +
                       std::abs(dy_at(pred, r, c, ch) - dy_at(gt, r, c, ch));
            }
        }
    if (band_pixels == 0)
        throw UndefinedMetricError("gradient_at_edge: empty boundary band (all-zero or all-one mask)");
    return acc / double(band_pixels * 3);
}

}  // namespace asuka::metrics
