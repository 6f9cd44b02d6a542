#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "asuka/core/tensor.hpp"

namespace asuka::core {

// HxWx3 image with values in [0,1], row-major HWC storage.
struct Image {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> data;  // h*w*3

    Image() = default;
    Image(std::int64_t h, std::int64_t w, double fill = 0.0)
        : height(h), width(w), data(std::size_t(h * w * 3), fill) {}

    double& at(std::int64_t r, std::int64_t c, int ch) {
        return data[std::size_t((r * width + c) * 3 + ch)];
    }
    double at(std::int64_t r, std::int64_t c, int ch) const {
        return data[std::size_t((r * width + c) * 3 + ch)];
    }

    std::int64_t pixels() const { return height * width; }

    void clamp01() {
        for (auto& x : data) x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    }

    // HWC <-> CHW bridges for the conv models.
    Tensor to_chw() const {
        Tensor t({3, height, width});
        for (std::int64_t r = 0; r < height; ++r)
            for (std::int64_t c = 0; c < width; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    t.data[std::size_t((ch * height + r) * width + c)] = at(r, c, ch);
        return t;
    }

    static Image from_chw(const Tensor& t) {
        if (t.rank() != 3 || t.dim(0) != 3) throw std::invalid_argument("from_chw: need [3,H,W]");
        Image img(t.dim(1), t.dim(2));
        for (std::int64_t r = 0; r < img.height; ++r)
            for (std::int64_t c = 0; c < img.width; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    img.at(r, c, ch) = t.data[std::size_t((ch * img.height + r) * img.width + c)];
        return img;
    }
};

inline double mean_l2(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("mean_l2: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / double(a.data.size());
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// PNG I/O. Gray images carry {0,255} mask payloads; RGB images are 8-bit.
// The encoder uses fixed settings so identical pixels give identical bytes.
void write_png_gray(const std::filesystem::path& p, const std::vector<std::uint8_t>& pixels,
                    std::int64_t height, std::int64_t width);
std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& p, std::int64_t* height,
                                        std::int64_t* width);
void write_png_rgb(const std::filesystem::path& p, const Image& img);
Image read_png_rgb(const std::filesystem::path& p);
std::string encode_png_rgb(const Image& img);  // in-memory PNG bytes

}  // namespace asuka::core
