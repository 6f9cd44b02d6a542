#include "asuka/data/features.hpp"

#include <cmath>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace asuka::data {

using core::Image;

void FeatureMatrix::validate() const {
    if (features.rank() != 2) throw std::invalid_argument("FeatureMatrix: rank-2 required");
    if (std::int64_t(ids.size()) != features.dim(0))
        throw std::invalid_argument("FeatureMatrix: id list must align to rows");
    for (double x : features.data)
        if (!std::isfinite(x)) throw std::invalid_argument("FeatureMatrix: non-finite entry");
}

std::vector<double> toy_pixel_stats_embedder(const Image& img) {
    constexpr int grid = 4;
    std::vector<double> out;
    out.reserve(grid * grid * 3 + 6);
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            const std::int64_t r0 = img.height * gy / grid, r1 = img.height * (gy + 1) / grid;
            const std::int64_t c0 = img.width * gx / grid, c1 = img.width * (gx + 1) / grid;
            double sum[3] = {0, 0, 0};
            for (std::int64_t r = r0; r < r1; ++r)
                for (std::int64_t c = c0; c < c1; ++c)
                    for (int ch = 0; ch < 3; ++ch) sum[ch] += img.at(r, c, ch);
            const double n = double((r1 - r0) * (c1 - c0));
            for (int ch = 0; ch < 3; ++ch) out.push_back(sum[ch] / n);
        }
    // global mean and variance per channel
    for (int ch = 0; ch < 3; ++ch) {
        double mean = 0.0;
        for (std::int64_t p = 0; p < img.pixels(); ++p) mean += img.data[std::size_t(3 * p + ch)];
        mean /= double(img.pixels());
        double var = 0.0;
        for (std::int64_t p = 0; p < img.pixels(); ++p) {
            const double d = img.data[std::size_t(3 * p + ch)] - mean;
            var += d * d;
        }
        out.push_back(mean);
        out.push_back(var / double(img.pixels()));
    }
    return out;
}

EmbedderRegistry::EmbedderRegistry() {
    embedders_["toy-pixel-stats"] = toy_pixel_stats_embedder;
}

void EmbedderRegistry::register_embedder(const std::string& name, EmbedderFn fn) {
    if (!fn) throw std::invalid_argument("register_embedder: empty function");
    embedders_[name] = std::move(fn);
}

const EmbedderFn& EmbedderRegistry::get(const std::string& name) const {
    auto it = embedders_.find(name);
    if (it == embedders_.end()) throw std::invalid_argument("unknown embedder: " + name);
    return it->second;
}

bool EmbedderRegistry::has(const std::string& name) const { return embedders_.count(name) > 0; }

FeatureMatrix embed_images(const std::vector<Image>& images, const std::vector<std::string>& ids,
                           const EmbedderFn& embedder) {
    if (images.size() != ids.size())
        throw std::invalid_argument("embed_images: ids must align with images");
    if (images.empty()) throw std::invalid_argument("embed_images: empty input");
    const auto first = embedder(images[0]);
    FeatureMatrix fm;
    fm.features = core::Tensor({std::int64_t(images.size()), std::int64_t(first.size())});
    fm.ids = ids;
    std::copy(first.begin(), first.end(), fm.features.data.begin());
    for (std::size_t i = 1; i < images.size(); ++i) {
        const auto f = embedder(images[i]);
        if (f.size() != first.size())
            throw std::invalid_argument("embed_images: inconsistent feature width");
        std::copy(f.begin(), f.end(), fm.features.data.begin() + std::int64_t(i) * std::int64_t(first.size()));
    }
    fm.validate();
    return fm;
}

HttpEmbedder::HttpEmbedder(std::string base_url, int timeout_ms)
    : base_url_(std::move(base_url)), timeout_ms_(timeout_ms) {}

std::vector<double> HttpEmbedder::operator()(const Image& img) const {
    httplib::Client client(base_url_);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    const std::string png = core::encode_png_rgb(img);
    auto res = client.Post("/embed", png, "image/png");
    if (!res || res->status != 200)
        throw std::runtime_error("feature service unavailable: " + base_url_);
    const auto j = nlohmann::json::parse(res->body);
    return j.get<std::vector<double>>();
}

}  // namespace asuka::data
