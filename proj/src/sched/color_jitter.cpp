#include "asuka/sched/color_jitter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asuka::sched {

using core::Image;

void ColorJitterParams::validate() const {
    if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0)
        throw std::invalid_argument("ColorJitterParams: magnitudes must be >= 0");
    if (hue > 0.5) throw std::invalid_argument("ColorJitterParams: hue must be <= 0.5");
}

namespace {
double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    v = mx;
    const double d = mx - mn;
    s = mx == 0.0 ? 0.0 : d / mx;
    if (d == 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r) h = (g - b) / d + (g < b ? 6.0 : 0.0);
    else if (mx == g) h = (b - r) / d + 2.0;
    else h = (r - g) / d + 4.0;
    h /= 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h -= std::floor(h);
    const double hh = h * 6.0;
    const int i = std::min(5, int(hh));
    const double f = hh - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}
}  // namespace

Image apply_brightness(const Image& img, double factor) {
    Image out = img;
    for (auto& x : out.data) x = clamp01(x * factor);
    return out;
}

Image apply_contrast(const Image& img, double factor) {
    // blend toward the image's mean luminance
    double mean = 0.0;
    for (std::int64_t p = 0; p < img.pixels(); ++p)
        mean += luma(img.data[std::size_t(3 * p)], img.data[std::size_t(3 * p + 1)],
                     img.data[std::size_t(3 * p + 2)]);
    mean /= double(img.pixels());
    Image out = img;
    for (auto& x : out.data) x = clamp01(x * factor + mean * (1.0 - factor));
    return out;
}

Image apply_saturation(const Image& img, double factor) {
    Image out = img;
    for (std::int64_t p = 0; p < img.pixels(); ++p) {
        const double r = img.data[std::size_t(3 * p)];
        const double g = img.data[std::size_t(3 * p + 1)];
        const double b = img.data[std::size_t(3 * p + 2)];
        const double y = luma(r, g, b);
        out.data[std::size_t(3 * p)] = clamp01(r * factor + y * (1.0 - factor));
        out.data[std::size_t(3 * p + 1)] = clamp01(g * factor + y * (1.0 - factor));
        out.data[std::size_t(3 * p + 2)] = clamp01(b * factor + y * (1.0 - factor));
    }
    return out;
}

Image apply_hue(const Image& img, double delta) {
    if (delta == 0.0) return img;
    Image out = img;
    for (std::int64_t p = 0; p < img.pixels(); ++p) {
        double h, s, v;
        rgb_to_hsv(img.data[std::size_t(3 * p)], img.data[std::size_t(3 * p + 1)],
                   img.data[std::size_t(3 * p + 2)], h, s, v);
        h += delta;
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out.data[std::size_t(3 * p)] = clamp01(r);
        out.data[std::size_t(3 * p + 1)] = clamp01(g);
        out.data[std::size_t(3 * p + 2)] = clamp01(b);
    }
    return out;
}

Image color_jitter(const Image& img, core::RngStream& rng, const ColorJitterParams& params) {
    params.validate();
    const double fb = rng.uniform(1.0 - params.brightness, 1.0 + params.brightness);
    const double fc = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast);
    const double fs = rng.uniform(1.0 - params.saturation, 1.0 + params.saturation);
    const double fh = rng.uniform(-params.hue, params.hue);
    std::vector<int> order = {0, 1, 2, 3};
    rng.shuffle(order);
    Image out = img;
    for (int op : order) {
        switch (op) {
            case 0: if (params.brightness > 0) out = apply_brightness(out, fb); break;
            case 1: if (params.contrast > 0) out = apply_contrast(out, fc); break;
            case 2: if (params.saturation > 0) out = apply_saturation(out, fs); break;
            default: if (params.hue > 0) out = apply_hue(out, fh); break;
        }
    }
    return out;
}

}  // namespace asuka::sched
