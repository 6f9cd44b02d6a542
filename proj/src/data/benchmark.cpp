#include "asuka/data/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace asuka::data {

using core::Image;
using nlohmann::json;

Image center_crop_resize(const Image& image, std::int64_t side) {
    if (image.height < 1 || image.width < 1)
        throw std::invalid_argument("center_crop_resize: empty image");
    const std::int64_t crop = std::min(image.height, image.width);
    const std::int64_t r0 = (image.height - crop) / 2;
    const std::int64_t c0 = (image.width - crop) / 2;

    Image out(side, side);
    const double scale = double(crop) / double(side);
    for (std::int64_t r = 0; r < side; ++r) {
        // standard half-pixel-centered sampling; identity at scale 1
        const double sy = (double(r) + 0.5) * scale - 0.5;
        const std::int64_t y0 = std::clamp<std::int64_t>(std::int64_t(std::floor(sy)), 0, crop - 1);
        const std::int64_t y1 = std::min(y0 + 1, crop - 1);
        const double fy = std::clamp(sy - double(y0), 0.0, 1.0);
        for (std::int64_t c = 0; c < side; ++c) {
            const double sx = (double(c) + 0.5) * scale - 0.5;
            const std::int64_t x0 = std::clamp<std::int64_t>(std::int64_t(std::floor(sx)), 0, crop - 1);
            const std::int64_t x1 = std::min(x0 + 1, crop - 1);
            const double fx = std::clamp(sx - double(x0), 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                const double v00 = image.at(r0 + y0, c0 + x0, ch);
                const double v01 = image.at(r0 + y0, c0 + x1, ch);
                const double v10 = image.at(r0 + y1, c0 + x0, ch);
                const double v11 = image.at(r0 + y1, c0 + x1, ch);
                out.at(r, c, ch) = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                                   fy * ((1.0 - fx) * v10 + fx * v11);
            }
        }
    }
    return out;
}

masks::Mask background_mask(const masks::Mask& mask, const masks::Mask& fg_segmentation) {
    if (mask.height != fg_segmentation.height || mask.width != fg_segmentation.width)
        throw std::invalid_argument("background_mask: shape mismatch");
    return masks::mask_and_not(mask, fg_segmentation);
}

std::vector<BenchmarkEntry> build_benchmark(const std::vector<BenchmarkDomain>& domains,
                                            const EmbedderRegistry& embedders,
                                            const BenchmarkOptions& opts,
                                            const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    const auto& embed = embedders.get(opts.embedder);

    std::vector<BenchmarkEntry> entries;
    core::RngStream root(opts.seed);
    json manifest;
    manifest["seed"] = opts.seed;
    manifest["clusters"] = opts.clusters;
    manifest["side"] = opts.side;
    manifest["entries"] = json::array();

    for (std::size_t dom_idx = 0; dom_idx < domains.size(); ++dom_idx) {
        const auto& domain = domains[dom_idx];
        if (domain.images.empty()) continue;
        const FeatureMatrix fm = embed_images(domain.images, domain.ids, embed);
        const std::int64_t k = std::min<std::int64_t>(opts.clusters, fm.count());
        core::RngStream cluster_rng = root.split(dom_idx * 2);
        const ClusterResult clusters = bisecting_kmeans(fm, k, cluster_rng);
        const auto reps = select_representatives(fm, clusters);

        core::RngStream mask_rng = root.split(dom_idx * 2 + 1);
        for (std::size_t ci = 0; ci < reps.size(); ++ci) {
            const auto row = std::size_t(
                std::find(fm.ids.begin(), fm.ids.end(), reps[ci]) - fm.ids.begin());
            const Image prepared = center_crop_resize(domain.images[row], opts.side);
            masks::Mask mask =
                masks::sample_mask(mask_rng, opts.side, opts.side, {}, opts.recipe).mask;
            if (domain.foreground.size() == domain.images.size() && domain.foreground[row]) {
                const masks::Mask fg_prepared = [&] {
                    // segmentation travels with the image through crop/resize
                    const auto& fg = *domain.foreground[row];
                    Image as_img(fg.height, fg.width);
                    for (std::int64_t r = 0; r < fg.height; ++r)
                        for (std::int64_t c = 0; c < fg.width; ++c)
                            for (int ch = 0; ch < 3; ++ch)
                                as_img.at(r, c, ch) = fg.at(r, c) ? 1.0 : 0.0;
                    const Image resized = center_crop_resize(as_img, opts.side);
                    masks::Mask out(opts.side, opts.side, 0);
                    for (std::int64_t r = 0; r < opts.side; ++r)
                        for (std::int64_t c = 0; c < opts.side; ++c)
                            out.at(r, c) = resized.at(r, c, 0) >= 0.5 ? 1 : 0;
                    return out;
                }();
                mask = background_mask(mask, fg_prepared);
            }

            BenchmarkEntry entry;
            entry.id = domain.name + "_" + reps[ci];
            entry.source_dataset = domain.name;
            entry.cluster_id = std::int64_t(ci);
            entry.mask_ratio = mask.ratio();
            entry.domain_tag = domain.name;
            entries.push_back(entry);

            core::write_png_rgb(out_dir / "images" / (entry.id + ".png"), prepared);
            masks::save_mask_png(out_dir / "masks" / (entry.id + ".png"), mask);
            json je;
            je["id"] = entry.id;
            je["source_dataset"] = entry.source_dataset;
            je["cluster_id"] = entry.cluster_id;
            je["mask_ratio"] = entry.mask_ratio;
            je["domain_tag"] = entry.domain_tag;
            manifest["entries"].push_back(je);
        }
    }

    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write benchmark manifest");
    out << manifest.dump(2) << "\n";
    return entries;
}

}  // namespace asuka::data
