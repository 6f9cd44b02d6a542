#pragma once

#include <cstdint>

#include "asuka/core/image.hpp"
#include "asuka/masks/mask.hpp"
#include "asuka/models/nn.hpp"

namespace asuka::models {

struct VaeConfig {
    std::int64_t latent_channels = 4;
    std::int64_t base_channels = 16;
    std::int64_t max_params = 5'000'000;
    static constexpr int downsample_factor = 8;
};

// Toy conv autoencoder with a conditional decoder. The decoder consumes the
// latent plus, at every scale, features of the unmasked pixels: conditioning
// input is (masked_image * (1-mask)) (+) (1-mask), so pixels under the mask
// can never influence the output.
class ToyVae {
public:
    ToyVae(VaeConfig cfg, std::uint64_t seed);

    const VaeConfig& config() const { return cfg_; }
    core::ParamStore& encoder_params() { return enc_params_; }
    const core::ParamStore& encoder_params() const { return enc_params_; }
    core::ParamStore& decoder_params() { return dec_params_; }
    const core::ParamStore& decoder_params() const { return dec_params_; }

    // Deterministic encoder, image [0,1] -> latent [C, H/8, W/8].
    core::Tensor encode(const core::Image& image) const;

    // Conditional decode; masked_image and mask at output resolution.
    core::Image decode_cond(const core::Tensor& latent, const core::Image& masked_image,
                            const masks::Mask& mask) const;

    // Unconditioned decode = all-masked conditioning with a zero image.
    core::Image decode_uncond(const core::Tensor& latent) const;

    // Graph-building paths for training.
    Var encode_var(const Var& image_chw) const;
    Var decode_cond_var(const Var& latent, const core::Tensor& cond_chw4) const;

    // Builds the 4-channel conditioning tensor (masked pixels zeroed + visibility).
    static core::Tensor conditioning_input(const core::Image& masked_image, const masks::Mask& mask);

private:
    VaeConfig cfg_;
    core::ParamStore enc_params_;
    core::ParamStore dec_params_;

    struct Conv {
        Var w, b;
    };
    // encoder: 3 stride-2 convs + 1x1 head
    Conv e1_, e2_, e3_, e_head_;
    // conditioning pyramid
    Conv c1_, c2_, c4_, c8_;
    // decoder stages
    Conv d0_, d1_, d2_, d3_, d_out_;
};

}  // namespace asuka::models
