#include "asuka/data/toy_corpus.hpp"

#include <cmath>

#include "asuka/sched/latent_aug.hpp"

namespace asuka::data {

using core::Image;
using core::RngStream;

Image toy_image(std::uint64_t seed, std::int64_t index, std::int64_t size) {
    RngStream rng = RngStream(seed).split(std::uint64_t(index));
    Image img(size, size);

    // smooth background: linear gradient + low-frequency waves per channel
    double base[3], gx[3], gy[3], wf[3], wp[3];
    for (int ch = 0; ch < 3; ++ch) {
        base[ch] = rng.uniform(0.2, 0.8);
        gx[ch] = rng.uniform(-0.3, 0.3);
        gy[ch] = rng.uniform(-0.3, 0.3);
        wf[ch] = rng.uniform(1.0, 3.0);
        wp[ch] = rng.uniform(0.0, 6.283185307179586);
    }
    for (std::int64_t r = 0; r < size; ++r)
        for (std::int64_t c = 0; c < size; ++c) {
            const double u = double(c) / double(size - 1), v = double(r) / double(size - 1);
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = base[ch] + gx[ch] * (u - 0.5) + gy[ch] * (v - 0.5) +
                                   0.1 * std::sin(wf[ch] * 6.283185307179586 * (u + v) + wp[ch]);
        }

    // a few soft shapes with distinct colors
    const int shapes = int(rng.uniform_int(1, 3));
    for (int s = 0; s < shapes; ++s) {
        const double cy = rng.uniform(0.15, 0.85) * double(size);
        const double cx = rng.uniform(0.15, 0.85) * double(size);
        const double rad = rng.uniform(0.08, 0.3) * double(size);
        const bool rect = rng.bernoulli(0.5);
        double col[3];
        for (auto& cc : col) cc = rng.uniform(0.05, 0.95);
        for (std::int64_t r = 0; r < size; ++r)
            for (std::int64_t c = 0; c < size; ++c) {
                double inside;
                if (rect) {
                    inside = (std::abs(double(r) - cy) <= rad && std::abs(double(c) - cx) <= rad)
                                 ? 1.0 : 0.0;
                } else {
                    const double d2 = (double(r) - cy) * (double(r) - cy) +
                                      (double(c) - cx) * (double(c) - cx);
                    inside = d2 <= rad * rad ? 1.0 : 0.0;
                }
                if (inside > 0.0)
                    for (int ch = 0; ch < 3; ++ch)
                        img.at(r, c, ch) = 0.85 * col[ch] + 0.15 * img.at(r, c, ch);
            }
    }
    img.clamp01();
    return img;
}

std::vector<Image> toy_corpus(std::uint64_t seed, std::int64_t count, std::int64_t size) {
    std::vector<Image> out;
    out.reserve(std::size_t(count));
    for (std::int64_t i = 0; i < count; ++i) out.push_back(toy_image(seed, i, size));
    return out;
}

std::vector<std::filesystem::path> write_toy_corpus(const std::filesystem::path& dir,
                                                    std::uint64_t seed, std::int64_t count,
                                                    std::int64_t size) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    for (std::int64_t i = 0; i < count; ++i) {
        const auto p = dir / ("toy_" + std::to_string(i) + ".at");
        sched::save_image_tensor(p, toy_image(seed, i, size));
        files.push_back(p);
    }
    return files;
}

}  // namespace asuka::data
