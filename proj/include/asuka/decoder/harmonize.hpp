#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "asuka/align/alignment.hpp"
#include "asuka/masks/mask.hpp"
#include "asuka/models/vae.hpp"
#include "asuka/sched/color_jitter.hpp"

namespace asuka::decoder {

enum class AugKind { color, latent, none };

// One local-harmonization training pair: the decoder must reconstruct the
// clean target from a corrupted latent while matching the visible pixels.
struct TrainingPair {
    core::Tensor corrupt_latent;
    core::Image cond_masked_image;  // original * (1 - mask)
    masks::Mask mask;
    core::Image target;  // original image
    AugKind aug = AugKind::none;
};

// For latent augmentation the caller passes the cached offline estimate of
// the image; color augmentation is applied here.
TrainingPair build_training_pair(const core::Image& image, const masks::Mask& mask,
                                 core::RngStream& rng, AugKind aug, const models::ToyVae& vae,
                                 const sched::ColorJitterParams& jitter,
                                 const core::Image* latent_augmented = nullptr);

// Streams training pairs over a corpus: masks from the mixture (with a
// configured fraction of jagged variants), latent-augmented inputs from the
// offline cache, color augmentation on the rest.
class PairBuilder {
public:
    struct Options {
        double jagged_fraction = 0.25;
        double latent_fraction = 0.5;
        sched::ColorJitterParams jitter;
        masks::MaskRecipe recipe;
    };

    PairBuilder(const std::vector<core::Image>& corpus,
                std::vector<std::optional<core::Image>> latent_cache,
                std::vector<masks::Mask> object_pool, const models::ToyVae& vae, Options opts);

    TrainingPair next(core::RngStream& rng) const;
    masks::Mask sample_pair_mask(std::int64_t h, std::int64_t w, core::RngStream& rng,
                                 bool* jagged_out = nullptr) const;

private:
    const std::vector<core::Image>* corpus_;  // outlives the builder
    std::vector<std::optional<core::Image>> latent_cache_;
    std::vector<masks::Mask> object_pool_;
    const models::ToyVae* vae_;
    Options opts_;
};

struct VaePretrainOptions {
    int steps = 1500;
    int batch = 2;
    double lr = 2e-3;
    std::uint64_t seed = 0;
};

// Stage A: plain unconditioned autoencoding, trains encoder and decoder.
std::vector<align::TraceRow> pretrain_vae(models::ToyVae& vae,
                                          const std::vector<core::Image>& corpus,
                                          const VaePretrainOptions& opts);

struct DecoderTrainOptions {
    int steps = 2000;
    int batch = 2;
    double lr = 1e-3;       // cosine-decayed
    double boundary_weight = 0.5;
    int band_width_px = 2;
    std::uint64_t seed = 0;
};

// Stage B: harmonization fine-tune of the conditional decoder. The encoder
// is frozen; L1 reconstruction plus a gradient-difference penalty on the
// mask-boundary band.
std::vector<align::TraceRow> train_decoder(models::ToyVae& vae, const PairBuilder& pairs,
                                           const DecoderTrainOptions& opts);

// composite = mask (.) decoded + (1 - mask) (.) original
core::Image composite(const core::Image& decoded, const core::Image& original,
                      const masks::Mask& mask);

// Synthetic color-shift evaluation item: the latent comes from a
// color-jittered image, the target is clean.
struct EvalItem {
    core::Image shifted;  // decoder input source
    masks::Mask mask;
    core::Image target;
};

std::vector<EvalItem> build_color_shift_eval_set(std::uint64_t seed, int count,
                                                 std::int64_t image_size,
                                                 const sched::ColorJitterParams& jitter,
                                                 const std::vector<masks::Mask>& object_pool);

// Paired G@e evaluation of a decode function over an eval set; composites
// against the clean target outside the mask before measuring.
using DecodeFn = std::function<core::Image(const core::Tensor& latent,
                                           const core::Image& cond_masked, const masks::Mask&)>;
double mean_gae_over(const std::vector<EvalItem>& items, const models::ToyVae& encoder_vae,
                     const DecodeFn& decode, int band_width_px = 2);

}  // namespace asuka::decoder
