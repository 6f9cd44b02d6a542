#include "asuka/decoder/harmonize.hpp"

#include <cmath>

#include "asuka/core/checkpoint.hpp"
#include "asuka/core/optim.hpp"
#include "asuka/data/toy_corpus.hpp"
#include "asuka/metrics/gradient_edge.hpp"

namespace asuka::decoder {

using namespace asuka::core;
using models::ToyVae;
using models::Var;

TrainingPair build_training_pair(const Image& image, const masks::Mask& mask, RngStream& rng,
                                 AugKind aug, const ToyVae& vae,
                                 const sched::ColorJitterParams& jitter,
                                 const Image* latent_augmented) {
    if (image.height != mask.height || image.width != mask.width)
        throw std::invalid_argument("build_training_pair: image/mask shape mismatch");
    TrainingPair pair;
    pair.aug = aug;
    pair.mask = mask;
    pair.target = image;
    pair.cond_masked_image = align::masked_image(image, mask);
    switch (aug) {
        case AugKind::none:
            pair.corrupt_latent = vae.encode(image);
            break;
        case AugKind::color:
            pair.corrupt_latent = vae.encode(sched::color_jitter(image, rng, jitter));
            break;
        case AugKind::latent:
            if (!latent_augmented)
                throw std::invalid_argument(
                    "build_training_pair: latent augmentation requires the cached estimate");
            pair.corrupt_latent = vae.encode(*latent_augmented);
            break;
    }
    return pair;
}

PairBuilder::PairBuilder(const std::vector<Image>& corpus,
                         std::vector<std::optional<Image>> latent_cache,
                         std::vector<masks::Mask> object_pool, const ToyVae& vae, Options opts)
    : corpus_(&corpus),
      latent_cache_(std::move(latent_cache)),
      object_pool_(std::move(object_pool)),
      vae_(&vae),
      opts_(opts) {
    if (corpus.empty()) throw std::invalid_argument("PairBuilder: empty corpus");
    if (!latent_cache_.empty() && latent_cache_.size() != corpus.size())
        throw std::invalid_argument("PairBuilder: latent cache size mismatch");
}

masks::Mask PairBuilder::sample_pair_mask(std::int64_t h, std::int64_t w, RngStream& rng,
                                          bool* jagged_out) const {
    const bool jagged = rng.bernoulli(opts_.jagged_fraction);
    if (jagged_out) *jagged_out = jagged;
    if (!jagged) return masks::sample_mask(rng, h, w, object_pool_, opts_.recipe).mask;
    // generate at doubled resolution, then nearest-neighbor downsample
    const auto hi = masks::sample_mask(rng, 2 * h, 2 * w, object_pool_, opts_.recipe);
    return masks::jagged_downsample(hi.mask, 2);
}

TrainingPair PairBuilder::next(RngStream& rng) const {
    const std::int64_t idx = rng.uniform_int(0, std::int64_t(corpus_->size()) - 1);
    const Image& img = (*corpus_)[std::size_t(idx)];
    const masks::Mask mask = sample_pair_mask(img.height, img.width, rng, nullptr);

    const bool has_latent =
        !latent_cache_.empty() && latent_cache_[std::size_t(idx)].has_value();
    if (has_latent && rng.bernoulli(opts_.latent_fraction)) {
        return build_training_pair(img, mask, rng, AugKind::latent, *vae_, opts_.jitter,
                                   &*latent_cache_[std::size_t(idx)]);
    }
    return build_training_pair(img, mask, rng, AugKind::color, *vae_, opts_.jitter, nullptr);
}

std::vector<align::TraceRow> pretrain_vae(ToyVae& vae, const std::vector<Image>& corpus,
                                          const VaePretrainOptions& opts) {
    if (corpus.empty()) throw std::invalid_argument("pretrain_vae: empty corpus");
    RngStream rng(opts.seed);
    ParamStore joint;
    for (auto& [name, v] : vae.encoder_params().items()) joint.items().emplace_back("enc." + name, v);
    for (auto& [name, v] : vae.decoder_params().items()) joint.items().emplace_back("dec." + name, v);
    set_store_trainable(vae.encoder_params(), true);
    set_store_trainable(vae.decoder_params(), true);
    AdamW opt(joint, {.lr = opts.lr});

    const std::int64_t size = corpus.front().height;
    const masks::Mask all(size, size, 1);
    const Image zero(size, size, 0.0);
    const Tensor uncond = ToyVae::conditioning_input(zero, all);

    std::vector<align::TraceRow> trace;
    trace.reserve(std::size_t(opts.steps));
    for (int step = 0; step < opts.steps; ++step) {
        joint.zero_grad();
        Var loss;
        for (int b = 0; b < opts.batch; ++b) {
            const Image& img =
                corpus[std::size_t(rng.uniform_int(0, std::int64_t(corpus.size()) - 1))];
            const auto z = vae.encode_var(constant(img.to_chw()));
            const auto out = vae.decode_cond_var(z, uncond);
            const auto sample = mse_loss(out, img.to_chw());
            loss = loss ? add(loss, sample) : sample;
        }
        loss = scale(loss, 1.0 / double(opts.batch));
        backward(loss);
        opt.step();
        trace.push_back(align::TraceRow{step, loss->value.data[0], 0.0, opts.lr});
    }
    return trace;
}

namespace {
// differentiable forward-difference kernels as constant conv weights
Var spatial_gradient_dx(const Var& x) {
    Tensor w({3, 3, 1, 2});
    for (int c = 0; c < 3; ++c) {
        w.data[std::size_t(((c * 3 + c) * 1 + 0) * 2 + 0)] = -1.0;
        w.data[std::size_t(((c * 3 + c) * 1 + 0) * 2 + 1)] = 1.0;
    }
    return conv2d(x, constant(w), constant(Tensor({3})), 1, 0);
}
Var spatial_gradient_dy(const Var& x) {
    Tensor w({3, 3, 2, 1});
    for (int c = 0; c < 3; ++c) {
        w.data[std::size_t(((c * 3 + c) * 2 + 0) * 1 + 0)] = -1.0;
        w.data[std::size_t(((c * 3 + c) * 2 + 1) * 1 + 0)] = 1.0;
    }
    return conv2d(x, constant(w), constant(Tensor({3})), 1, 0);
}

Tensor band_weight_chw(const masks::Mask& band, std::int64_t H, std::int64_t W) {
    Tensor weight({3, H, W});
    for (std::int64_t r = 0; r < H; ++r)
        for (std::int64_t c = 0; c < W; ++c) {
            const double v = band.at(r, c) ? 1.0 : 0.0;
            for (int ch = 0; ch < 3; ++ch) weight.data[std::size_t((ch * H + r) * W + c)] = v;
        }
    return weight;
}

Tensor crop_chw(const Tensor& t, std::int64_t h, std::int64_t w) {
    Tensor out({t.dim(0), h, w});
    for (std::int64_t c = 0; c < t.dim(0); ++c)
        for (std::int64_t r = 0; r < h; ++r)
            for (std::int64_t cc = 0; cc < w; ++cc)
                out.data[std::size_t((c * h + r) * w + cc)] =
                    t.data[std::size_t((c * t.dim(1) + r) * t.dim(2) + cc)];
    return out;
}
}  // namespace

std::vector<align::TraceRow> train_decoder(ToyVae& vae, const PairBuilder& pairs,
                                           const DecoderTrainOptions& opts) {
    // encoder frozen for the whole fine-tune
    auto encoder_digest = [&]() {
        std::string acc;
        for (const auto& [name, v] : vae.encoder_params().items()) {
            acc += name;
            acc.append(reinterpret_cast<const char*>(v->value.data.data()),
                       v->value.data.size() * sizeof(double));
        }
        return sha256_hex(acc);
    };
    const std::string digest_before = encoder_digest();
    set_store_trainable(vae.encoder_params(), false);
    set_store_trainable(vae.decoder_params(), true);

    RngStream rng(opts.seed);
    AdamW opt(vae.decoder_params(), {.lr = opts.lr});
    std::vector<align::TraceRow> trace;
    trace.reserve(std::size_t(opts.steps));

    for (int step = 0; step < opts.steps; ++step) {
        // cosine decay to zero over the run
        const double lr = opts.lr * 0.5 *
                          (1.0 + std::cos(3.14159265358979323846 * double(step) / double(opts.steps)));
        opt.set_lr(lr);
        vae.decoder_params().zero_grad();
        Var loss;
        for (int b = 0; b < opts.batch; ++b) {
            const TrainingPair pair = pairs.next(rng);
            const Tensor cond = ToyVae::conditioning_input(pair.cond_masked_image, pair.mask);
            const auto out = vae.decode_cond_var(constant(pair.corrupt_latent), cond);
            const Tensor target = pair.target.to_chw();
            Var sample = l1_loss(out, target);
            if (opts.boundary_weight > 0.0) {
                const auto band =
                    metrics::boundary_band(pair.mask, opts.band_width_px).band;
                const std::int64_t H = pair.mask.height, W = pair.mask.width;
                const Tensor wfull = band_weight_chw(band, H, W);
                const auto dx = spatial_gradient_dx(out);
                const auto dy = spatial_gradient_dy(out);
                const Tensor tdx = spatial_gradient_dx(constant(target))->value;
                const Tensor tdy = spatial_gradient_dy(constant(target))->value;
                const auto pen_x = l1_loss_weighted(dx, tdx, crop_chw(wfull, H, W - 1));
                const auto pen_y = l1_loss_weighted(dy, tdy, crop_chw(wfull, H - 1, W));
                sample = add(sample, scale(add(pen_x, pen_y), opts.boundary_weight));
            }
            loss = loss ? add(loss, sample) : sample;
        }
        loss = scale(loss, 1.0 / double(opts.batch));
        backward(loss);
        opt.step();
        trace.push_back(align::TraceRow{step, loss->value.data[0], 0.0, lr});
    }

    if (encoder_digest() != digest_before)
        throw align::FrozenViolationError("train_decoder: encoder parameters changed");
    return trace;
}

Image composite(const Image& decoded, const Image& original, const masks::Mask& mask) {
    if (decoded.height != original.height || decoded.width != original.width ||
        decoded.height != mask.height || decoded.width != mask.width)
        throw std::invalid_argument("composite: shape mismatch");
    Image out = original;
    for (std::int64_t r = 0; r < mask.height; ++r)
        for (std::int64_t c = 0; c < mask.width; ++c)
            if (mask.at(r, c))
                for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = decoded.at(r, c, ch);
    return out;
}

std::vector<EvalItem> build_color_shift_eval_set(std::uint64_t seed, int count,
                                                 std::int64_t image_size,
                                                 const sched::ColorJitterParams& jitter,
                                                 const std::vector<masks::Mask>& object_pool) {
    std::vector<EvalItem> items;
    items.reserve(std::size_t(count));
    RngStream rng = RngStream(seed).split(0xC0105);
    for (int i = 0; i < count; ++i) {
        EvalItem item;
        item.target = data::toy_image(seed ^ 0x5eedULL, 10'000 + i, image_size);
        item.mask = masks::sample_mask(rng, image_size, image_size, object_pool).mask;
        item.shifted = sched::color_jitter(item.target, rng, jitter);
        items.push_back(std::move(item));
    }
    return items;
}

double mean_gae_over(const std::vector<EvalItem>& items, const ToyVae& encoder_vae,
                     const DecodeFn& decode, int band_width_px) {
    if (items.empty()) throw std::invalid_argument("mean_gae_over: empty eval set");
    double acc = 0.0;
    for (const auto& item : items) {
        const Tensor z = encoder_vae.encode(item.shifted);
        const Image cond = align::masked_image(item.target, item.mask);
        const Image decoded = decode(z, cond, item.mask);
        const Image result = composite(decoded, item.target, item.mask);
        acc += metrics::gradient_at_edge(result, item.target, item.mask, band_width_px);
    }
    return acc / double(items.size());
}

}  // namespace asuka::decoder
