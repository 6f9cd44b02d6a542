#include "asuka/models/mae.hpp"

#include <cmath>
#include <stdexcept>

#include "asuka/core/optim.hpp"

namespace asuka::models {

using namespace asuka::core;

ToyMae::ToyMae(MaeConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.image_size % cfg_.patch_size != 0)
        throw std::invalid_argument("ToyMae: image size not divisible by patch size");
    RngStream rng(seed);
    const std::int64_t D = cfg_.patch_dim();
    const std::int64_t M = cfg_.width;
    patch_embed_w_ = params_.add("patch_embed.w", Tensor::randn({D, M}, rng, 1.0 / std::sqrt(double(D))));
    patch_embed_b_ = params_.add("patch_embed.b", Tensor::zeros({M}));
    pos_embed_ = params_.add("pos_embed", Tensor::randn({cfg_.num_patches(), M}, rng, 0.02));
    mask_token_ = params_.add("mask_token", Tensor::randn({1, M}, rng, 0.02));
    for (int l = 0; l < cfg_.layers; ++l)
        blocks_.push_back(make_block(params_, "block" + std::to_string(l), M, cfg_.mlp_ratio, rng));
    out_ln_g_ = params_.add("out_ln.g", Tensor::full({M}, 1.0));
    out_ln_b_ = params_.add("out_ln.b", Tensor::zeros({M}));
    pixel_w_ = params_.add("pixel_head.w", Tensor::randn({M, D}, rng, 1.0 / std::sqrt(double(M))));
    pixel_b_ = params_.add("pixel_head.b", Tensor::zeros({D}));
    if (params_.param_count() > cfg_.max_params)
        throw std::invalid_argument("ToyMae: parameter ceiling exceeded");
}

Tensor ToyMae::patch_tokens(const Image& image) const {
    if (image.height != cfg_.image_size || image.width != cfg_.image_size)
        throw std::invalid_argument("ToyMae: image size mismatch with config");
    const std::int64_t g = cfg_.grid(), ps = cfg_.patch_size;
    Tensor out({g * g, cfg_.patch_dim()});
    for (std::int64_t pr = 0; pr < g; ++pr)
        for (std::int64_t pc = 0; pc < g; ++pc) {
            double* dst = out.data.data() + (pr * g + pc) * cfg_.patch_dim();
            for (std::int64_t r = 0; r < ps; ++r)
                for (std::int64_t c = 0; c < ps; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        *dst++ = image.at(pr * ps + r, pc * ps + c, ch);
        }
    return out;
}

Var ToyMae::forward_tokens(const Image& image, const masks::PatchMask& patch_mask) const {
    const std::int64_t g = cfg_.grid();
    if (patch_mask.rows != g || patch_mask.cols != g)
        throw std::invalid_argument("ToyMae: patch grid mismatch");
    const std::int64_t N = cfg_.num_patches();
    const std::int64_t M = cfg_.width;

    const auto embedded = add_rowvec(matmul(constant(patch_tokens(image)), patch_embed_w_),
                                     patch_embed_b_);
    // visible patches keep their embedding; masked ones take the mask token
    Tensor vis({N, M}), hid({N, M});
    for (std::int64_t i = 0; i < N; ++i) {
        const double m = patch_mask.grid[std::size_t(i)] ? 1.0 : 0.0;
        for (std::int64_t j = 0; j < M; ++j) {
            vis.data[std::size_t(i * M + j)] = 1.0 - m;
            hid.data[std::size_t(i * M + j)] = m;
        }
    }
    Tensor ones_col({N, 1});
    ones_col.fill(1.0);
    const auto mask_rows = matmul(constant(ones_col), mask_token_);  // broadcast mask token
    auto x = add(mul_const(embedded, vis), mul_const(mask_rows, hid));
    x = add(x, pos_embed_);
    for (const auto& b : blocks_) x = transformer_block(x, b, cfg_.heads);
    return layernorm_rows(x, out_ln_g_, out_ln_b_);
}

Var ToyMae::pixel_head(const Var& tokens) const {
    return sigmoid(add_rowvec(matmul(tokens, pixel_w_), pixel_b_));
}

MAEPrior ToyMae::predict(const Image& image, const masks::PatchMask& patch_mask) const {
    MAEPrior prior;
    prior.tokens = forward_tokens(image, patch_mask)->value;
    prior.patch_size = cfg_.patch_size;
    prior.rows = cfg_.grid();
    prior.cols = cfg_.grid();
    prior.source = MAEPrior::Source::predicted;
    return prior;
}

MAEPrior ToyMae::reconstruct(const Image& image) const {
    const masks::PatchMask empty(cfg_.grid(), cfg_.grid(), 0);
    MAEPrior prior;
    prior.tokens = forward_tokens(image, empty)->value;
    prior.patch_size = cfg_.patch_size;
    prior.rows = cfg_.grid();
    prior.cols = cfg_.grid();
    prior.source = MAEPrior::Source::reconstructed;
    return prior;
}

Image ToyMae::decode_tokens(const Tensor& tokens) const {
    const auto pixels = pixel_head(constant(tokens));
    const std::int64_t g = cfg_.grid(), ps = cfg_.patch_size;
    Image img(cfg_.image_size, cfg_.image_size);
    for (std::int64_t pr = 0; pr < g; ++pr)
        for (std::int64_t pc = 0; pc < g; ++pc) {
            const double* src = pixels->value.data.data() + (pr * g + pc) * cfg_.patch_dim();
            for (std::int64_t r = 0; r < ps; ++r)
                for (std::int64_t c = 0; c < ps; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        img.at(pr * ps + r, pc * ps + c, ch) = *src++;
        }
    return img;
}

Var ToyMae::reconstruction_loss(const Image& image, const masks::PatchMask& patch_mask) const {
    const auto tokens = forward_tokens(image, patch_mask);
    const auto pixels = pixel_head(tokens);
    const Tensor target = patch_tokens(image);
    // L2 dominated by masked patches; a small visible weight keeps the pixel
    // head faithful on visible tokens so full-image reconstruction decodes.
    Tensor weight({target.dim(0), target.dim(1)});
    for (std::int64_t i = 0; i < target.dim(0); ++i) {
        const double m = patch_mask.grid[std::size_t(i)] ? 1.0 : 0.5;
        for (std::int64_t j = 0; j < target.dim(1); ++j)
            weight.data[std::size_t(i * target.dim(1) + j)] = m;
    }
    return mse_loss_weighted(pixels, target, weight);
}

std::vector<double> train_mae(ToyMae& mae, const std::vector<Image>& corpus,
                              const std::vector<masks::Mask>& object_pool,
                              const MaeTrainOptions& opts) {
    if (corpus.empty()) throw std::invalid_argument("train_mae: empty corpus");
    RngStream rng(opts.seed);
    AdamW opt(mae.params(), {.lr = opts.lr});
    const auto& cfg = mae.config();
    std::vector<double> trace;
    trace.reserve(std::size_t(opts.steps));
    for (int step = 0; step < opts.steps; ++step) {
        const Image& img = corpus[std::size_t(rng.uniform_int(0, std::int64_t(corpus.size()) - 1))];
        masks::PatchMask pm(cfg.grid(), cfg.grid(), 0);
        if (!rng.bernoulli(opts.unmasked_fraction)) {
            const auto sampled = masks::sample_mask(rng, cfg.image_size, cfg.image_size, object_pool);
            const auto patched = masks::patchify(sampled.mask, cfg.patch_size);
            const auto target = std::int64_t(std::llround(opts.target_patch_ratio *
                                                          double(cfg.num_patches())));
            pm = patched.masked_count() >= target
                     ? patched
                     : masks::expand_to_patch_ratio(sampled.mask, cfg.patch_size,
                                                    opts.target_patch_ratio, rng);
        }
        mae.params().zero_grad();
        auto loss = mae.reconstruction_loss(img, pm);
        backward(loss);
        opt.step();
        trace.push_back(loss->value.data[0]);
    }
    return trace;
}

}  // namespace asuka::models
