#include "asuka/align/alignment.hpp"

#include <cmath>

#include "asuka/core/checkpoint.hpp"
#include "asuka/core/optim.hpp"

namespace asuka::align {

using namespace asuka::core;
using namespace asuka::models;

AlignmentModule::AlignmentModule(AlignmentConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    RngStream rng(seed);
    dim_w_ = params_.add("dim_map.w", Tensor::randn({cfg_.in_width, cfg_.out_width}, rng,
                                                    1.0 / std::sqrt(double(cfg_.in_width))));
    dim_b_ = params_.add("dim_map.b", Tensor::zeros({cfg_.out_width}));
    for (int b = 0; b < cfg_.blocks; ++b)
        blocks_.push_back(make_block(params_, "block" + std::to_string(b), cfg_.out_width,
                                     cfg_.mlp_ratio, rng));
    if (params_.param_count() > cfg_.max_params)
        throw std::invalid_argument("AlignmentModule: parameter ceiling exceeded");
}

Var AlignmentModule::forward(const Var& tokens) const {
    if (tokens->value.rank() != 2 || tokens->value.dim(1) != cfg_.in_width)
        throw std::invalid_argument("AlignmentModule: token width mismatch");
    auto x = add_rowvec(matmul(tokens, dim_w_), dim_b_);
    for (const auto& b : blocks_) x = transformer_block(x, b, cfg_.heads);
    return x;
}

Tensor AlignmentModule::align(const MAEPrior& prior) const {
    return forward(constant(prior.tokens))->value;
}

double PriorSchedule::p(std::int64_t step) const {
    if (step < 0) throw std::invalid_argument("PriorSchedule: negative step");
    if (step >= decay_steps) return p_final;
    return p0 + (p_final - p0) * double(step) / double(decay_steps);
}

double schedule_p(std::int64_t step) { return PriorSchedule{}.p(step); }

const MAEPrior& choose_prior(RngStream& rng, std::int64_t step, const MAEPrior& predicted,
                             const MAEPrior& reconstructed, const PriorSchedule& schedule) {
    if (!predicted.tokens.same_shape(reconstructed.tokens))
        throw std::invalid_argument("choose_prior: prior shape mismatch");
    return rng.bernoulli(schedule.p(step)) ? reconstructed : predicted;
}

masks::PatchMask mae_patch_mask(const masks::Mask& pixel_mask, std::int64_t patch,
                                double target_ratio, RngStream& rng) {
    const auto patched = masks::patchify(pixel_mask, patch);
    const std::int64_t total = patched.rows * patched.cols;
    const std::int64_t target = std::int64_t(std::llround(target_ratio * double(total)));
    if (patched.masked_count() >= target) return patched;
    return masks::expand_to_patch_ratio(pixel_mask, patch, target_ratio, rng);
}

Tensor latent_mask_tensor(const masks::Mask& mask, int factor) {
    const masks::Mask lm = masks::jagged_downsample(mask, factor);
    Tensor t({1, lm.height, lm.width});
    for (std::size_t i = 0; i < lm.grid.size(); ++i) t.data[i] = lm.grid[i] ? 1.0 : 0.0;
    return t;
}

core::Image masked_image(const core::Image& image, const masks::Mask& mask) {
    core::Image out = image;
    for (std::int64_t r = 0; r < out.height; ++r)
        for (std::int64_t c = 0; c < out.width; ++c)
            if (mask.at(r, c))
                for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = 0.0;
    return out;
}

std::vector<TraceRow> train_alignment(AlignmentModule& alignment,
                                      const std::vector<core::Image>& corpus,
                                      const std::vector<masks::Mask>& object_pool,
                                      const ToyMae& mae, const ToyVae& vae,
                                      const ToyDenoiser& generator,
                                      const sched::NoiseSchedule& schedule,
                                      const AlignTrainOptions& opts) {
    if (corpus.empty()) throw std::invalid_argument("train_alignment: empty corpus");
    if (generator.config().mode != CondMode::cross_attention)
        throw std::invalid_argument("train_alignment: generator must run the cross-attention path");

    // freeze contract: generator, MAE and VAE encoder stay untouched
    auto frozen_digest = [&]() {
        std::string acc;
        for (const auto* store :
             {&generator.params(), &mae.params(), &vae.encoder_params()}) {
            for (const auto& [name, v] : store->items()) {
                acc += name;
                acc.append(reinterpret_cast<const char*>(v->value.data.data()),
                           v->value.data.size() * sizeof(double));
            }
        }
        return sha256_hex(acc);
    };
    const std::string digest_before = frozen_digest();
    set_store_trainable(generator.params(), false);
    set_store_trainable(mae.params(), false);
    set_store_trainable(vae.encoder_params(), false);

    const std::int64_t img_size = corpus.front().height;
    const std::int64_t latent_grid = img_size / models::VaeConfig::downsample_factor;
    const std::int64_t mae_grid = mae.config().grid();
    const double pos_scale = double(latent_grid) / double(mae_grid);

    Tensor pos_ids({mae_grid * mae_grid, 2});
    for (std::int64_t r = 0; r < mae_grid; ++r)
        for (std::int64_t c = 0; c < mae_grid; ++c) {
            pos_ids.at2(r * mae_grid + c, 0) = double(r) * pos_scale;
            pos_ids.at2(r * mae_grid + c, 1) = double(c) * pos_scale;
        }

    RngStream rng(opts.seed);
    AdamW opt(alignment.params(), {.lr = opts.lr});
    std::vector<TraceRow> trace;
    trace.reserve(std::size_t(opts.steps));

    for (int step = 0; step < opts.steps; ++step) {
        const double p = opts.prior_schedule.p(step);
        alignment.params().zero_grad();
        Var loss;
        for (int b = 0; b < opts.batch; ++b) {
            const core::Image& img =
                corpus[std::size_t(rng.uniform_int(0, std::int64_t(corpus.size()) - 1))];
            const auto sampled = masks::sample_mask(rng, img_size, img_size, object_pool);
            const auto pm = mae_patch_mask(sampled.mask, mae.config().patch_size, 0.75, rng);

            const MAEPrior predicted = mae.predict(img, pm);
            const MAEPrior reconstructed = mae.reconstruct(img);
            const MAEPrior& prior =
                choose_prior(rng, step, predicted, reconstructed, opts.prior_schedule);

            const Tensor z0 = vae.encode(img);
            const Tensor z_masked = vae.encode(masked_image(img, sampled.mask));
            const Tensor lm = latent_mask_tensor(sampled.mask, models::VaeConfig::downsample_factor);
            const std::int64_t t = rng.uniform_int(0, schedule.T - 1);
            const sched::LatentState st = sched::make_latent_state(schedule, z0, t, rng);

            const Var cond = alignment.forward(constant(prior.tokens));
            const Var eps_hat = generator.forward(st.z_t, z_masked, lm, cond, pos_ids, t);
            const Var sample_loss = mse_loss(eps_hat, st.eps);
            loss = loss ? add(loss, sample_loss) : sample_loss;
        }
        loss = scale(loss, 1.0 / double(opts.batch));
        backward(loss);
        opt.step();
        trace.push_back(TraceRow{step, loss->value.data[0], p, opts.lr});
    }

    if (frozen_digest() != digest_before)
        throw FrozenViolationError("train_alignment: frozen parameters changed");
    return trace;
}

}  // namespace asuka::align
