#include "asuka/data/bisecting_kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace asuka::data {

using core::RngStream;
using core::Tensor;

namespace {

double sq_dist(const double* a, const double* b, std::int64_t d) {
    double s = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

std::vector<double> mean_of(const Tensor& X, const std::vector<std::int64_t>& members) {
    const std::int64_t d = X.dim(1);
    std::vector<double> mu(std::size_t(d), 0.0);
    for (auto i : members)
        for (std::int64_t j = 0; j < d; ++j) mu[std::size_t(j)] += X.at2(i, j);
    for (auto& v : mu) v /= double(members.size());
    return mu;
}

double sse_of(const Tensor& X, const std::vector<std::int64_t>& members,
              const std::vector<double>& center) {
    double s = 0.0;
    for (auto i : members) s += sq_dist(X.data.data() + i * X.dim(1), center.data(), X.dim(1));
    return s;
}

// seeded 2-means over one cluster; farthest-pair initialization
void two_means(const Tensor& X, const std::vector<std::int64_t>& members, int iters,
               RngStream& rng, std::vector<std::int64_t>& left, std::vector<std::int64_t>& right) {
    const std::int64_t d = X.dim(1);
    // farthest pair (deterministic over the member order)
    std::int64_t best_a = members[0], best_b = members[0];
    double best = -1.0;
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            const double dist = sq_dist(X.data.data() + members[i] * d,
                                        X.data.data() + members[j] * d, d);
            if (dist > best) {
                best = dist;
                best_a = members[i];
                best_b = members[j];
            }
        }
    std::vector<double> ca(X.data.data() + best_a * d, X.data.data() + (best_a + 1) * d);
    std::vector<double> cb(X.data.data() + best_b * d, X.data.data() + (best_b + 1) * d);

    for (int it = 0; it < iters; ++it) {
        left.clear();
        right.clear();
        for (auto i : members) {
            const double da = sq_dist(X.data.data() + i * d, ca.data(), d);
            const double db = sq_dist(X.data.data() + i * d, cb.data(), d);
            (da <= db ? left : right).push_back(i);
        }
        if (left.empty() || right.empty()) {
            // degenerate side: reseed with a random member and continue
            auto& empty_side = left.empty() ? ca : cb;
            const std::int64_t pick =
                members[std::size_t(rng.uniform_int(0, std::int64_t(members.size()) - 1))];
            empty_side.assign(X.data.data() + pick * d, X.data.data() + (pick + 1) * d);
            continue;
        }
        ca = mean_of(X, left);
        cb = mean_of(X, right);
    }
    if (left.empty() || right.empty()) {
        // all members coincide; split arbitrarily but deterministically
        left.assign(members.begin(), members.begin() + std::int64_t(members.size()) / 2);
        right.assign(members.begin() + std::int64_t(members.size()) / 2, members.end());
    }
}

}  // namespace

ClusterResult bisecting_kmeans(const FeatureMatrix& features, std::int64_t k, RngStream& rng,
                               int inner_iters) {
    features.validate();
    const std::int64_t n = features.count();
    if (k < 1 || n < k) throw std::invalid_argument("bisecting_kmeans: need n >= k >= 1");
    const Tensor& X = features.features;

    std::vector<std::vector<std::int64_t>> clusters;
    {
        std::vector<std::int64_t> all(static_cast<std::size_t>(n), 0);
        for (std::int64_t i = 0; i < n; ++i) all[std::size_t(i)] = i;
        clusters.push_back(std::move(all));
    }
    std::vector<double> sse;
    sse.push_back(sse_of(X, clusters[0], mean_of(X, clusters[0])));

    while (std::int64_t(clusters.size()) < k) {
        // split the cluster with the largest SSE that is still divisible
        std::int64_t worst = -1;
        double worst_sse = -1.0;
        for (std::size_t c = 0; c < clusters.size(); ++c)
            if (clusters[c].size() > 1 && sse[c] > worst_sse) {
                worst_sse = sse[c];
                worst = std::int64_t(c);
            }
        if (worst < 0) throw std::runtime_error("bisecting_kmeans: no divisible cluster left");

        std::vector<std::int64_t> left, right;
        two_means(X, clusters[std::size_t(worst)], inner_iters, rng, left, right);
        const double sse_before = sse[std::size_t(worst)];
        const double sse_left = sse_of(X, left, mean_of(X, left));
        const double sse_right = sse_of(X, right, mean_of(X, right));
        // splitting can only remove within-cluster scatter
        if (sse_left + sse_right > sse_before + 1e-9 * (1.0 + sse_before))
            throw std::runtime_error("bisecting_kmeans: SSE increased across a split");

        clusters[std::size_t(worst)] = std::move(left);
        sse[std::size_t(worst)] = sse_left;
        clusters.push_back(std::move(right));
        sse.push_back(sse_right);
    }

    ClusterResult result;
    result.k = k;
    result.assignment.assign(std::size_t(n), -1);
    result.centers = Tensor({k, X.dim(1)});
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto mu = mean_of(X, clusters[c]);
        for (std::int64_t j = 0; j < X.dim(1); ++j) result.centers.at2(std::int64_t(c), j) = mu[std::size_t(j)];
        for (auto i : clusters[c]) result.assignment[std::size_t(i)] = std::int64_t(c);
    }
    return result;
}

double total_sse(const FeatureMatrix& features, const ClusterResult& result) {
    const Tensor& X = features.features;
    double s = 0.0;
    for (std::int64_t i = 0; i < features.count(); ++i) {
        const std::int64_t c = result.assignment[std::size_t(i)];
        s += sq_dist(X.data.data() + i * X.dim(1), result.centers.data.data() + c * X.dim(1),
                     X.dim(1));
    }
    return s;
}

std::vector<std::string> select_representatives(const FeatureMatrix& features,
                                                const ClusterResult& result) {
    features.validate();
    if (std::int64_t(result.assignment.size()) != features.count())
        throw std::invalid_argument("select_representatives: assignment size mismatch");
    const Tensor& X = features.features;
    const std::int64_t d = X.dim(1);
    std::vector<std::int64_t> best_row(std::size_t(result.k), -1);
    std::vector<double> best_dist(std::size_t(result.k), std::numeric_limits<double>::infinity());
    for (std::int64_t i = 0; i < features.count(); ++i) {
        const std::int64_t c = result.assignment[std::size_t(i)];
        const double dist =
            sq_dist(X.data.data() + i * d, result.centers.data.data() + c * d, d);
        const std::int64_t cur = best_row[std::size_t(c)];
        const bool better =
            dist < best_dist[std::size_t(c)] ||
            (dist == best_dist[std::size_t(c)] && cur >= 0 &&
             features.ids[std::size_t(i)] < features.ids[std::size_t(cur)]);
        if (better) {
            best_dist[std::size_t(c)] = dist;
            best_row[std::size_t(c)] = i;
        }
    }
    std::vector<std::string> out;
    out.reserve(std::size_t(result.k));
    for (std::int64_t c = 0; c < result.k; ++c) {
        if (best_row[std::size_t(c)] < 0)
            throw std::runtime_error("select_representatives: empty cluster");
        out.push_back(features.ids[std::size_t(best_row[std::size_t(c)])]);
    }
    return out;
}

}  // namespace asuka::data
