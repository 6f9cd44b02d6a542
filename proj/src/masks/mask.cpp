#include "asuka/masks/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "asuka/core/image.hpp"

namespace asuka::masks {

using core::RngStream;

const char* mask_base_name(MaskBase b) {
    switch (b) {
        case MaskBase::object_shape: return "object";
        case MaskBase::irregular: return "irregular";
        case MaskBase::regular: return "regular";
    }
    return "?";
}

void MaskRecipe::validate() const {
    const double sum = p_object + p_irregular + p_regular;
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("MaskRecipe: base probabilities must sum to 1");
    if (!(0.0 <= ratio_min && ratio_min < ratio_max && ratio_max <= 1.0))
        throw std::invalid_argument("MaskRecipe: need 0 <= ratio_min < ratio_max <= 1");
    if (dilation_min_px < 0 || dilation_max_px < dilation_min_px)
        throw std::invalid_argument("MaskRecipe: bad dilation range");
}

namespace {

void check_size(std::int64_t h, std::int64_t w) {
    if (h < 16 || w < 16) throw std::invalid_argument("mask dimensions must be >= 16");
}

void stamp_disc(Mask& m, double cy, double cx, double radius) {
    const std::int64_t r0 = std::max<std::int64_t>(0, std::int64_t(std::floor(cy - radius)));
    const std::int64_t r1 = std::min<std::int64_t>(m.height - 1, std::int64_t(std::ceil(cy + radius)));
    const std::int64_t c0 = std::max<std::int64_t>(0, std::int64_t(std::floor(cx - radius)));
    const std::int64_t c1 = std::min<std::int64_t>(m.width - 1, std::int64_t(std::ceil(cx + radius)));
    const double rr = radius * radius;
    for (std::int64_t r = r0; r <= r1; ++r)
        for (std::int64_t c = c0; c <= c1; ++c) {
            const double dy = double(r) - cy, dx = double(c) - cx;
            if (dy * dy + dx * dx <= rr) m.at(r, c) = 1;
        }
}

// Random polyline with varying thickness, LaMa-style brush stroke.
void draw_brush_stroke(Mask& m, RngStream& rng) {
    const double scale = double(std::min(m.height, m.width)) / 256.0;
    const int vertices = int(rng.uniform_int(4, 12));
    double y = rng.uniform(0.0, double(m.height));
    double x = rng.uniform(0.0, double(m.width));
    double angle = rng.uniform(0.0, 6.283185307179586);
    for (int v = 0; v < vertices; ++v) {
        angle += rng.uniform(-1.0, 1.0);
        const double len = rng.uniform(12.0, 60.0) * scale;
        const double radius = rng.uniform(6.0, 22.0) * scale;
        const double ny = y + len * std::sin(angle);
        const double nx = x + len * std::cos(angle);
        const int steps = std::max(1, int(len / std::max(1.0, radius * 0.5)));
        for (int s = 0; s <= steps; ++s) {
            const double t = double(s) / double(steps);
            stamp_disc(m, y + (ny - y) * t, x + (nx - x) * t, radius);
        }
        y = std::clamp(ny, 0.0, double(m.height - 1));
        x = std::clamp(nx, 0.0, double(m.width - 1));
    }
}

void draw_random_rect(Mask& m, RngStream& rng, double max_frac) {
    const std::int64_t rh = rng.uniform_int(m.height / 8, std::int64_t(double(m.height) * max_frac));
    const std::int64_t rw = rng.uniform_int(m.width / 8, std::int64_t(double(m.width) * max_frac));
    const std::int64_t r0 = rng.uniform_int(0, m.height - rh);
    const std::int64_t c0 = rng.uniform_int(0, m.width - rw);
    for (std::int64_t r = r0; r < r0 + rh; ++r)
        for (std::int64_t c = c0; c < c0 + rw; ++c) m.at(r, c) = 1;
}

Mask centered_rect_of_ratio(std::int64_t h, std::int64_t w, double ratio) {
    Mask m(h, w, 0);
    const double side_frac = std::sqrt(std::clamp(ratio, 0.0, 1.0));
    const std::int64_t rh = std::clamp<std::int64_t>(std::int64_t(std::llround(side_frac * double(h))), 1, h);
    const std::int64_t rw = std::clamp<std::int64_t>(std::int64_t(std::llround(side_frac * double(w))), 1, w);
    const std::int64_t r0 = (h - rh) / 2, c0 = (w - rw) / 2;
    for (std::int64_t r = r0; r < r0 + rh; ++r)
        for (std::int64_t c = c0; c < c0 + rw; ++c) m.at(r, c) = 1;
    return m;
}

// Paste an object shape at a random offset, scaled to fit.
Mask place_object(const Mask& shape, std::int64_t h, std::int64_t w, RngStream& rng) {
    Mask m(h, w, 0);
    // nearest-neighbor rescale of the shape to a random size
    const double target = rng.uniform(0.35, 0.95) * double(std::min(h, w));
    const double sy = target / double(shape.height);
    const double sx = target / double(shape.width);
    const std::int64_t sh = std::max<std::int64_t>(1, std::int64_t(double(shape.height) * sy));
    const std::int64_t sw = std::max<std::int64_t>(1, std::int64_t(double(shape.width) * sx));
    const std::int64_t off_r = rng.uniform_int(0, std::max<std::int64_t>(0, h - sh));
    const std::int64_t off_c = rng.uniform_int(0, std::max<std::int64_t>(0, w - sw));
    for (std::int64_t r = 0; r < sh && off_r + r < h; ++r)
        for (std::int64_t c = 0; c < sw && off_c + c < w; ++c) {
            const std::int64_t src_r = std::min(shape.height - 1, std::int64_t(double(r) / sy));
            const std::int64_t src_c = std::min(shape.width - 1, std::int64_t(double(c) / sx));
            if (shape.at(src_r, src_c)) m.at(off_r + r, off_c + c) = 1;
        }
    return m;
}

void clamp_open_ratio(Mask& m, RngStream& rng) {
    // generators promise ratio in (0,1)
    const double r = m.ratio();
    if (r == 0.0) {
        stamp_disc(m, rng.uniform(8.0, double(m.height - 8)), rng.uniform(8.0, double(m.width - 8)),
                   double(std::min(m.height, m.width)) / 16.0);
    } else if (r == 1.0) {
        const std::int64_t ch = m.height / 8, cw = m.width / 8;
        for (std::int64_t rr = 0; rr < ch; ++rr)
            for (std::int64_t cc = 0; cc < cw; ++cc) m.at(rr, cc) = 0;
    }
}

}  // namespace

Mask gen_irregular_mask(RngStream& rng, std::int64_t h, std::int64_t w, IrregularStyle style) {
    check_size(h, w);
    Mask m(h, w, 0);
    if (style == IrregularStyle::brush) {
        const int strokes = int(rng.uniform_int(1, 7));
        for (int s = 0; s < strokes; ++s) draw_brush_stroke(m, rng);
        if (rng.bernoulli(0.3)) draw_random_rect(m, rng, 0.4);
    } else {
        const int rects = int(rng.uniform_int(2, 6));
        for (int k = 0; k < rects; ++k) draw_random_rect(m, rng, 0.6);
        if (rng.bernoulli(0.4)) draw_brush_stroke(m, rng);
    }
    clamp_open_ratio(m, rng);
    return m;
}

Mask gen_regular_mask(RngStream& rng, std::int64_t h, std::int64_t w) {
    check_size(h, w);
    Mask m(h, w, 0);
    const std::int64_t rh = rng.uniform_int(h / 8, (h * 3) / 4);
    const std::int64_t rw = rng.uniform_int(w / 8, (w * 3) / 4);
    const std::int64_t r0 = rng.uniform_int(0, h - rh);
    const std::int64_t c0 = rng.uniform_int(0, w - rw);
    for (std::int64_t r = r0; r < r0 + rh; ++r)
        for (std::int64_t c = c0; c < c0 + rw; ++c) m.at(r, c) = 1;
    if (rng.bernoulli(0.5)) m = m.complement();
    return m;
}

SampledMask sample_mask(RngStream& rng, std::int64_t h, std::int64_t w,
                        const std::vector<Mask>& object_pool, const MaskRecipe& recipe) {
    check_size(h, w);
    recipe.validate();
    double p_obj = recipe.p_object, p_irr = recipe.p_irregular, p_reg = recipe.p_regular;
    if (object_pool.empty()) {
        // renormalize over the remaining bases, preserving their relative odds
        const double rem = p_irr + p_reg;
        p_obj = 0.0;
        p_irr /= rem;
        p_reg /= rem;
    }
    const double u = rng.uniform();
    MaskBase base;
    if (u < p_obj) base = MaskBase::object_shape;
    else if (u < p_obj + p_irr) base = MaskBase::irregular;
    else base = MaskBase::regular;

    const int max_rejections = 100;
    Mask out;
    bool ok = false;
    for (int attempt = 0; attempt < max_rejections; ++attempt) {
        Mask m;
        switch (base) {
            case MaskBase::object_shape: {
                const auto& shape = object_pool[std::size_t(rng.uniform_int(0, std::int64_t(object_pool.size()) - 1))];
                m = place_object(shape, h, w, rng);
                if (rng.bernoulli(recipe.p_combine_object_with_irregular))
                    m = mask_union(m, gen_irregular_mask(rng, h, w, IrregularStyle::brush));
                break;
            }
            case MaskBase::irregular:
                m = gen_irregular_mask(rng, h, w,
                                       rng.bernoulli(0.5) ? IrregularStyle::brush : IrregularStyle::comod);
                break;
            case MaskBase::regular:
                m = gen_regular_mask(rng, h, w);
                break;
        }
        const double r = m.ratio();
        if (r >= recipe.ratio_min && r <= recipe.ratio_max) {
            out = std::move(m);
            ok = true;
            break;
        }
    }
    if (!ok) {
        // rejection budget exhausted: fall back to a rectangle at the range midpoint
        out = centered_rect_of_ratio(h, w, 0.5 * (recipe.ratio_min + recipe.ratio_max));
    }
    return SampledMask{std::move(out), base};
}

Mask dilate(const Mask& mask, int radius_px) {
    if (radius_px < 0) throw std::invalid_argument("dilate: negative radius");
    if (radius_px == 0) return mask;
    // separable max filter with a square structuring element of side 2r+1
    Mask tmp(mask.height, mask.width, 0);
    for (std::int64_t r = 0; r < mask.height; ++r) {
        for (std::int64_t c = 0; c < mask.width; ++c) {
            std::uint8_t v = 0;
            const std::int64_t c0 = std::max<std::int64_t>(0, c - radius_px);
            const std::int64_t c1 = std::min<std::int64_t>(mask.width - 1, c + radius_px);
            for (std::int64_t k = c0; k <= c1 && !v; ++k) v = mask.at(r, k);
            tmp.at(r, c) = v;
        }
    }
    Mask out(mask.height, mask.width, 0);
    for (std::int64_t c = 0; c < mask.width; ++c) {
        for (std::int64_t r = 0; r < mask.height; ++r) {
            std::uint8_t v = 0;
            const std::int64_t r0 = std::max<std::int64_t>(0, r - radius_px);
            const std::int64_t r1 = std::min<std::int64_t>(mask.height - 1, r + radius_px);
            for (std::int64_t k = r0; k <= r1 && !v; ++k) v = tmp.at(k, c);
            out.at(r, c) = v;
        }
    }
    return out;
}

Mask erode(const Mask& mask, int radius_px) {
    if (radius_px < 0) throw std::invalid_argument("erode: negative radius");
    // duality: erode(m) = NOT dilate(NOT m); out-of-bounds counts as unmasked
    return dilate(mask.complement(), radius_px).complement();
}

Mask jagged_downsample(const Mask& mask_hi, int factor) {
    if (factor < 2) throw std::invalid_argument("jagged_downsample: factor must be >= 2");
    if (mask_hi.height % factor != 0 || mask_hi.width % factor != 0)
        throw std::invalid_argument("jagged_downsample: dims not divisible by factor");
    Mask out(mask_hi.height / factor, mask_hi.width / factor, 0);
    for (std::int64_t r = 0; r < out.height; ++r)
        for (std::int64_t c = 0; c < out.width; ++c)
            out.at(r, c) = mask_hi.at(r * factor, c * factor);
    return out;
}

PatchMask patchify(const Mask& mask, std::int64_t patch) {
    if (patch <= 0 || mask.height % patch != 0 || mask.width % patch != 0)
        throw std::invalid_argument("patchify: dims not divisible by patch");
    PatchMask pm(mask.height / patch, mask.width / patch, 0);
    for (std::int64_t r = 0; r < mask.height; ++r)
        for (std::int64_t c = 0; c < mask.width; ++c)
            if (mask.at(r, c)) pm.at(r / patch, c / patch) = 1;
    return pm;
}

PatchMask expand_to_patch_ratio(const Mask& mask, std::int64_t patch, double target_ratio,
                                core::RngStream& rng) {
    PatchMask pm = patchify(mask, patch);
    const std::int64_t total = pm.rows * pm.cols;
    const std::int64_t target = std::int64_t(std::llround(target_ratio * double(total)));
    const std::int64_t have = pm.masked_count();
    if (have > target)
        throw std::runtime_error("expand_to_patch_ratio: patch-level ratio already exceeds target");
    if (have == target) return pm;
    std::vector<std::int64_t> candidates;
    candidates.reserve(std::size_t(total - have));
    for (std::int64_t i = 0; i < total; ++i)
        if (!pm.grid[std::size_t(i)]) candidates.push_back(i);
    rng.shuffle(candidates);
    for (std::int64_t k = 0; k < target - have; ++k) pm.grid[std::size_t(candidates[std::size_t(k)])] = 1;
    return pm;
}

void save_mask_png(const std::filesystem::path& p, const Mask& mask) {
    std::vector<std::uint8_t> px(mask.grid.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.grid[i] ? 255 : 0;
    core::write_png_gray(p, px, mask.height, mask.width);
}

Mask load_mask_png(const std::filesystem::path& p) {
    std::int64_t h = 0, w = 0;
    const auto px = core::read_png_gray(p, &h, &w);
    Mask m(h, w, 0);
    for (std::size_t i = 0; i < px.size(); ++i) m.grid[i] = px[i] >= 128 ? 1 : 0;
    return m;
}

void save_mask_manifest(const std::filesystem::path& p, const Mask& mask, std::uint64_t seed,
                        const MaskRecipe& recipe, MaskBase base) {
    nlohmann::json j;
    j["seed"] = seed;
    j["base_type"] = mask_base_name(base);
    j["ratio"] = mask.ratio();
    j["recipe"] = {{"p_object", recipe.p_object},
                   {"p_irregular", recipe.p_irregular},
                   {"p_regular", recipe.p_regular},
                   {"p_combine_object_with_irregular", recipe.p_combine_object_with_irregular},
                   {"ratio_min", recipe.ratio_min},
                   {"ratio_max", recipe.ratio_max},
                   {"dilation_min_px", recipe.dilation_min_px},
                   {"dilation_max_px", recipe.dilation_max_px}};
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write mask manifest: " + p.string());
    out << j.dump(2) << "\n";
}

}  // namespace asuka::masks
