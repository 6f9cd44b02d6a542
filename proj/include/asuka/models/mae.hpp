#pragma once

#include <cstdint>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/masks/mask.hpp"
#include "asuka/models/nn.hpp"

namespace asuka::models {

// Context-stable token prior produced by the masked autoencoder.
struct MAEPrior {
    enum class Source { predicted, reconstructed };
    core::Tensor tokens;  // N_m x M_m
    std::int64_t patch_size = 0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    Source source = Source::predicted;
};

struct MaeConfig {
    std::int64_t image_size = 64;
    std::int64_t patch_size = 16;
    std::int64_t width = 64;  // M_m
    int layers = 2;
    int heads = 4;
    int mlp_ratio = 4;
    std::int64_t max_params = 5'000'000;

    std::int64_t grid() const { return image_size / patch_size; }
    std::int64_t num_patches() const { return grid() * grid(); }
    std::int64_t patch_dim() const { return patch_size * patch_size * 3; }
};

// Toy masked autoencoder: all patches are embedded, masked patches are
// replaced with a learned mask token, a small transformer mixes context, and
// a pixel head maps tokens back to patch pixels. Visible tokens carry
// content, masked tokens carry predictions.
class ToyMae {
public:
    ToyMae(MaeConfig cfg, std::uint64_t seed);

    const MaeConfig& config() const { return cfg_; }
    core::ParamStore& params() { return params_; }
    const core::ParamStore& params() const { return params_; }

    MAEPrior predict(const core::Image& image, const masks::PatchMask& patch_mask) const;
    MAEPrior reconstruct(const core::Image& image) const;

    // Graph-building forward used for training; returns token features [N, M_m].
    Var forward_tokens(const core::Image& image, const masks::PatchMask& patch_mask) const;
    // Pixel head over token features: [N, patch_dim].
    Var pixel_head(const Var& tokens) const;

    // Decode token features back to an image via the pixel head.
    core::Image decode_tokens(const core::Tensor& tokens) const;

    // One training step: masked-patch L2 reconstruction of the image pixels.
    Var reconstruction_loss(const core::Image& image, const masks::PatchMask& patch_mask) const;

private:
    core::Tensor patch_tokens(const core::Image& image) const;  // [N, patch_dim]

    MaeConfig cfg_;
    core::ParamStore params_;
    Var patch_embed_w_, patch_embed_b_;
    Var pos_embed_;
    Var mask_token_;
    std::vector<BlockWeights> blocks_;
    Var out_ln_g_, out_ln_b_;
    Var pixel_w_, pixel_b_;
};

struct MaeTrainOptions {
    int steps = 800;
    double lr = 2e-3;
    // fraction of steps trained with an empty patch mask, so the no-mask
    // regime used by the reconstructed prior stays in-distribution
    double unmasked_fraction = 0.2;
    double target_patch_ratio = 0.75;
    std::uint64_t seed = 0;
};

// Trains on the inpainting mask mixture expanded to the target patch ratio.
// Returns the per-step loss trace.
std::vector<double> train_mae(ToyMae& mae, const std::vector<core::Image>& corpus,
                              const std::vector<masks::Mask>& object_pool,
                              const MaeTrainOptions& opts);

}  // namespace asuka::models
