#include "asuka/models/vae.hpp"

#include <cmath>
#include <stdexcept>

namespace asuka::models {

using namespace asuka::core;

namespace {
Var conv_silu(const Var& x, const Var& w, const Var& b, int stride) {
    return silu(conv2d(x, w, b, stride, 1));
}
}  // namespace

ToyVae::ToyVae(VaeConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    RngStream rng(seed);
    const std::int64_t B = cfg_.base_channels;
    const std::int64_t C = cfg_.latent_channels;
    auto make_conv = [&rng](ParamStore& store, const std::string& name, std::int64_t cin,
                            std::int64_t cout, std::int64_t k) {
        Conv conv;
        conv.w = store.add(name + ".w",
                           Tensor::randn({cout, cin, k, k}, rng, 1.0 / std::sqrt(double(cin * k * k))));
        conv.b = store.add(name + ".b", Tensor::zeros({cout}));
        return conv;
    };
    e1_ = make_conv(enc_params_, "enc.c1", 3, B, 3);
    e2_ = make_conv(enc_params_, "enc.c2", B, 2 * B, 3);
    e3_ = make_conv(enc_params_, "enc.c3", 2 * B, 2 * B, 3);
    e_head_ = make_conv(enc_params_, "enc.head", 2 * B, C, 3);

    c1_ = make_conv(dec_params_, "cond.c1", 4, B / 2, 3);
    c2_ = make_conv(dec_params_, "cond.c2", B / 2, B, 3);
    c4_ = make_conv(dec_params_, "cond.c4", B, 2 * B, 3);
    c8_ = make_conv(dec_params_, "cond.c8", 2 * B, 2 * B, 3);

    d0_ = make_conv(dec_params_, "dec.d0", C + 2 * B, 4 * B, 3);
    d1_ = make_conv(dec_params_, "dec.d1", 4 * B + 2 * B, 3 * B, 3);
    d2_ = make_conv(dec_params_, "dec.d2", 3 * B + B, 2 * B, 3);
    d3_ = make_conv(dec_params_, "dec.d3", 2 * B + B / 2, B, 3);
    d_out_ = make_conv(dec_params_, "dec.out", B, 3, 3);

    if (enc_params_.param_count() + dec_params_.param_count() > cfg_.max_params)
        throw std::invalid_argument("ToyVae: parameter ceiling exceeded");
}

Var ToyVae::encode_var(const Var& image_chw) const {
    auto h = conv_silu(image_chw, e1_.w, e1_.b, 2);
    h = conv_silu(h, e2_.w, e2_.b, 2);
    h = conv_silu(h, e3_.w, e3_.b, 2);
    return conv2d(h, e_head_.w, e_head_.b, 1, 1);
}

Tensor ToyVae::encode(const Image& image) const {
    if (image.height % VaeConfig::downsample_factor != 0 ||
        image.width % VaeConfig::downsample_factor != 0)
        throw std::invalid_argument("ToyVae: image dims must be divisible by 8");
    return encode_var(constant(image.to_chw()))->value;
}

Tensor ToyVae::conditioning_input(const Image& masked_image, const masks::Mask& mask) {
    if (masked_image.height != mask.height || masked_image.width != mask.width)
        throw std::invalid_argument("ToyVae: conditioning resolution mismatch");
    const std::int64_t H = mask.height, W = mask.width;
    Tensor cond({4, H, W});
    for (std::int64_t r = 0; r < H; ++r)
        for (std::int64_t c = 0; c < W; ++c) {
            const double vis = mask.at(r, c) ? 0.0 : 1.0;
            for (int ch = 0; ch < 3; ++ch)
                cond.data[std::size_t((ch * H + r) * W + c)] = masked_image.at(r, c, ch) * vis;
            cond.data[std::size_t((3 * H + r) * W + c)] = vis;
        }
    return cond;
}

Var ToyVae::decode_cond_var(const Var& latent, const Tensor& cond_chw4) const {
    if (latent->value.rank() != 3 || latent->value.dim(0) != cfg_.latent_channels)
        throw std::invalid_argument("ToyVae: latent must be [C,h,w]");
    const std::int64_t H = cond_chw4.dim(1), W = cond_chw4.dim(2);
    if (cond_chw4.dim(0) != 4 || latent->value.dim(1) * VaeConfig::downsample_factor != H ||
        latent->value.dim(2) * VaeConfig::downsample_factor != W)
        throw std::invalid_argument("ToyVae: conditioning resolution must equal output resolution");

    const auto cond = constant(cond_chw4);
    const auto f1 = conv_silu(cond, c1_.w, c1_.b, 1);   // H
    const auto f2 = conv_silu(f1, c2_.w, c2_.b, 2);     // H/2
    const auto f4 = conv_silu(f2, c4_.w, c4_.b, 2);     // H/4
    const auto f8 = conv_silu(f4, c8_.w, c8_.b, 2);     // H/8

    auto h = conv_silu(concat_channels(latent, f8), d0_.w, d0_.b, 1);
    h = conv_silu(concat_channels(upsample_nearest2x(h), f4), d1_.w, d1_.b, 1);
    h = conv_silu(concat_channels(upsample_nearest2x(h), f2), d2_.w, d2_.b, 1);
    h = conv_silu(concat_channels(upsample_nearest2x(h), f1), d3_.w, d3_.b, 1);
    return sigmoid(conv2d(h, d_out_.w, d_out_.b, 1, 1));
}

Image ToyVae::decode_cond(const Tensor& latent, const Image& masked_image,
                          const masks::Mask& mask) const {
    const Tensor cond = conditioning_input(masked_image, mask);
    return Image::from_chw(decode_cond_var(constant(latent), cond)->value);
}

Image ToyVae::decode_uncond(const Tensor& latent) const {
    const std::int64_t H = latent.dim(1) * VaeConfig::downsample_factor;
    const std::int64_t W = latent.dim(2) * VaeConfig::downsample_factor;
    const Image zero(H, W, 0.0);
    const masks::Mask all(H, W, 1);
    return decode_cond(latent, zero, all);
}

}  // namespace asuka::models
