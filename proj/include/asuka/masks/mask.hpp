#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "asuka/core/rng.hpp"

namespace asuka::masks {

// Binary hole mask: 1 = masked (to be filled), 0 = visible.
struct Mask {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> grid;  // h*w, values in {0,1}

    Mask() = default;
    Mask(std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
        : height(h), width(w), grid(std::size_t(h * w), fill) {}

    std::uint8_t& at(std::int64_t r, std::int64_t c) { return grid[std::size_t(r * width + c)]; }
    std::uint8_t at(std::int64_t r, std::int64_t c) const { return grid[std::size_t(r * width + c)]; }

    double ratio() const {
        std::int64_t s = 0;
        for (auto v : grid) s += v;
        return double(s) / double(height * width);
    }

    Mask complement() const {
        Mask m = *this;
        for (auto& v : m.grid) v = v ? 0 : 1;
        return m;
    }

    bool subset_of(const Mask& other) const {
        if (height != other.height || width != other.width) return false;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (grid[i] && !other.grid[i]) return false;
        return true;
    }

    bool operator==(const Mask& o) const {
        return height == o.height && width == o.width && grid == o.grid;
    }
};

inline Mask mask_union(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("mask_union: size mismatch");
    Mask m = a;
    for (std::size_t i = 0; i < m.grid.size(); ++i) m.grid[i] = (m.grid[i] | b.grid[i]) ? 1 : 0;
    return m;
}

inline Mask mask_and_not(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("mask_and_not: size mismatch");
    Mask m = a;
    for (std::size_t i = 0; i < m.grid.size(); ++i) m.grid[i] = (m.grid[i] && !b.grid[i]) ? 1 : 0;
    return m;
}

// Boolean grid over MAE patches, row-major.
struct PatchMask {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::uint8_t> grid;

    PatchMask() = default;
    PatchMask(std::int64_t r, std::int64_t c, std::uint8_t fill = 0)
        : rows(r), cols(c), grid(std::size_t(r * c), fill) {}

    std::uint8_t& at(std::int64_t r, std::int64_t c) { return grid[std::size_t(r * cols + c)]; }
    std::uint8_t at(std::int64_t r, std::int64_t c) const { return grid[std::size_t(r * cols + c)]; }

    std::int64_t masked_count() const {
        std::int64_t s = 0;
        for (auto v : grid) s += v;
        return s;
    }
};

enum class MaskBase { object_shape, irregular, regular };
enum class IrregularStyle { brush, comod };

const char* mask_base_name(MaskBase b);

// Mixture recipe. Probabilities must sum to 1.
struct MaskRecipe {
    double p_object = 0.5;
    double p_irregular = 0.4;
    double p_regular = 0.1;
    double p_combine_object_with_irregular = 0.5;
    double ratio_min = 0.1;
    double ratio_max = 0.75;
    int dilation_min_px = 5;
    int dilation_max_px = 20;

    void validate() const;
};

Mask gen_irregular_mask(core::RngStream& rng, std::int64_t h, std::int64_t w, IrregularStyle style);
Mask gen_regular_mask(core::RngStream& rng, std::int64_t h, std::int64_t w);

struct SampledMask {
    Mask mask;
    MaskBase base;
};

SampledMask sample_mask(core::RngStream& rng, std::int64_t h, std::int64_t w,
                        const std::vector<Mask>& object_pool,
                        const MaskRecipe& recipe = MaskRecipe{});

Mask dilate(const Mask& mask, int radius_px);
Mask erode(const Mask& mask, int radius_px);
Mask jagged_downsample(const Mask& mask_hi, int factor);

PatchMask patchify(const Mask& mask, std::int64_t patch);
PatchMask expand_to_patch_ratio(const Mask& mask, std::int64_t patch, double target_ratio,
                                core::RngStream& rng);

// PNG {0,255} payload plus a JSON sidecar (<stem>.json) recording seed,
// recipe, base-type tag and ratio.
void save_mask_png(const std::filesystem::path& p, const Mask& mask);
Mask load_mask_png(const std::filesystem::path& p);
void save_mask_manifest(const std::filesystem::path& p, const Mask& mask, std::uint64_t seed,
                        const MaskRecipe& recipe, MaskBase base);

}  // namespace asuka::masks
