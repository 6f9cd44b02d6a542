#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asuka/core/rng.hpp"
#include "asuka/data/features.hpp"

namespace asuka::data {

struct ClusterResult {
    std::vector<std::int64_t> assignment;  // n entries in [0, k)
    core::Tensor centers;                  // k x d
    std::int64_t k = 0;
};

// Divisive clustering: repeatedly split the cluster with the largest
// within-cluster SSE via seeded 2-means (farthest-pair initialization) until
// k clusters exist. Total SSE is non-increasing across splits.
ClusterResult bisecting_kmeans(const FeatureMatrix& features, std::int64_t k,
                               core::RngStream& rng, int inner_iters = 25);

double total_sse(const FeatureMatrix& features, const ClusterResult& result);

// One id per cluster: the member nearest its center, ties to the smallest id.
std::vector<std::string> select_representatives(const FeatureMatrix& features,
                                                const ClusterResult& result);

}  // namespace asuka::data
