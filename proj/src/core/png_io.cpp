#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

#include "asuka/core/image.hpp"

namespace asuka::core {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const std::filesystem::path& p, const std::uint8_t* pixels,
                    std::int64_t height, std::int64_t width, int color_type, int channels) {
    FilePtr fp(std::fopen(p.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open PNG for write: " + p.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng write error: " + p.string());
    }
    png_init_io(png, fp.get());
    // fixed compression settings keep output byte-stable for fixed pixels
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height), nullptr);
    for (std::int64_t r = 0; r < height; ++r)
        rows[std::size_t(r)] = const_cast<png_bytep>(pixels + r * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_impl(const std::filesystem::path& p, std::int64_t* height,
                                        std::int64_t* width, int want_channels) {
    FilePtr fp(std::fopen(p.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open PNG for read: " + p.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng read error: " + p.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (want_channels == 3 && (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA))
        png_set_gray_to_rgb(png);
    if (want_channels == 1 && (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
                               color_type == PNG_COLOR_TYPE_PALETTE))
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    std::vector<std::uint8_t> out(std::size_t(h) * w * std::size_t(want_channels));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r)
        rows[r] = out.data() + std::size_t(r) * w * std::size_t(want_channels);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    *height = h;
    *width = w;
    return out;
}

std::uint8_t to_u8(double v) {
    const double x = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return std::uint8_t(x * 255.0 + 0.5);
}

}  // namespace

void write_png_gray(const std::filesystem::path& p, const std::vector<std::uint8_t>& pixels,
                    std::int64_t height, std::int64_t width) {
    if (std::int64_t(pixels.size()) != height * width)
        throw std::invalid_argument("write_png_gray: size mismatch");
    write_png_impl(p, pixels.data(), height, width, PNG_COLOR_TYPE_GRAY, 1);
}

std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& p, std::int64_t* height,
                                        std::int64_t* width) {
    return read_png_impl(p, height, width, 1);
}

void write_png_rgb(const std::filesystem::path& p, const Image& img) {
    std::vector<std::uint8_t> bytes(std::size_t(img.height * img.width * 3));
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(img.data[i]);
    write_png_impl(p, bytes.data(), img.height, img.width, PNG_COLOR_TYPE_RGB, 3);
}

std::string encode_png_rgb(const Image& img) {
    std::vector<std::uint8_t> bytes(std::size_t(img.height * img.width * 3));
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(img.data[i]);

    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng in-memory write error");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto* s = static_cast<std::string*>(png_get_io_ptr(p));
            s->append(reinterpret_cast<const char*>(data), len);
        },
        [](png_structp) {});
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height), nullptr);
    for (std::int64_t r = 0; r < img.height; ++r)
        rows[std::size_t(r)] = bytes.data() + r * img.width * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image read_png_rgb(const std::filesystem::path& p) {
    std::int64_t h = 0, w = 0;
    const auto bytes = read_png_impl(p, &h, &w, 3);
    Image img(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = double(bytes[i]) / 255.0;
    return img;
}

}  // namespace asuka::core
