#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/data/bisecting_kmeans.hpp"
#include "asuka/masks/mask.hpp"

namespace asuka::data {

// Centered square crop of side min(h,w), bilinear resize to side x side.
core::Image center_crop_resize(const core::Image& image, std::int64_t side = 512);

// Background-only mask: mask AND NOT foreground segmentation.
masks::Mask background_mask(const masks::Mask& mask, const masks::Mask& fg_segmentation);

struct BenchmarkDomain {
    std::string name;  // indoor | landscape | building | background
    std::vector<core::Image> images;
    std::vector<std::string> ids;
    // per-image foreground segmentations (background domain only)
    std::vector<std::optional<masks::Mask>> foreground;
};

struct BenchmarkOptions {
    std::int64_t clusters = 8;   // 500 at paper scale
    std::int64_t side = 64;      // 512 at paper scale
    masks::MaskRecipe recipe;    // defaults overridden below
    std::uint64_t seed = 0;
    std::string embedder = "toy-pixel-stats";

    // benchmark masking: no regular masks, wider ratio range
    BenchmarkOptions() {
        recipe.p_object = 5.0 / 9.0;
        recipe.p_irregular = 4.0 / 9.0;
        recipe.p_regular = 0.0;
        recipe.ratio_min = 0.2;
        recipe.ratio_max = 0.8;
    }
};

struct BenchmarkEntry {
    std::string id;
    std::string source_dataset;
    std::int64_t cluster_id = 0;
    double mask_ratio = 0.0;
    std::string domain_tag;
};

// Representative selection per domain, cropped/resized images, masks and a
// manifest under out_dir/{images,masks,manifest.json}.
std::vector<BenchmarkEntry> build_benchmark(const std::vector<BenchmarkDomain>& domains,
                                            const EmbedderRegistry& embedders,
                                            const BenchmarkOptions& opts,
                                            const std::filesystem::path& out_dir);

}  // namespace asuka::data
