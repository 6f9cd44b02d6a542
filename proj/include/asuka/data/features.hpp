#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/core/tensor.hpp"

namespace asuka::data {

struct FeatureMatrix {
    core::Tensor features;         // n x d
    std::vector<std::string> ids;  // aligned to rows

    std::int64_t count() const { return features.rank() == 2 ? features.dim(0) : 0; }
    std::int64_t dim() const { return features.rank() == 2 ? features.dim(1) : 0; }
    void validate() const;
};

using EmbedderFn = std::function<std::vector<double>(const core::Image&)>;

// Deterministic baseline: per-cell RGB means over a coarse grid plus global
// channel statistics.
std::vector<double> toy_pixel_stats_embedder(const core::Image& img);

// Named embedders; an external feature service can be registered here.
class EmbedderRegistry {
public:
    EmbedderRegistry();  // registers "toy-pixel-stats"
    void register_embedder(const std::string& name, EmbedderFn fn);
    const EmbedderFn& get(const std::string& name) const;
    bool has(const std::string& name) const;

private:
    std::map<std::string, EmbedderFn> embedders_;
};

FeatureMatrix embed_images(const std::vector<core::Image>& images,
                           const std::vector<std::string>& ids, const EmbedderFn& embedder);

// HTTP client for a CLIP-style feature service: POST /embed with PNG bytes,
// expects a JSON array of numbers.
class HttpEmbedder {
public:
    HttpEmbedder(std::string base_url, int timeout_ms = 30000);
    std::vector<double> operator()(const core::Image& img) const;

private:
    std::string base_url_;
    int timeout_ms_;
};

}  // namespace asuka::data
