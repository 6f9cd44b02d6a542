#pragma once

#include <cstdint>
#include <vector>

#include "asuka/masks/mask.hpp"
#include "asuka/models/denoiser.hpp"
#include "asuka/models/mae.hpp"
#include "asuka/models/nn.hpp"
#include "asuka/models/vae.hpp"
#include "asuka/sched/noise_schedule.hpp"

namespace asuka::align {

using models::MAEPrior;
using models::Var;

struct AlignmentConfig {
    std::int64_t in_width = 64;    // M_m
    std::int64_t out_width = 128;  // M_s
    int blocks = 4;
    int heads = 4;
    int mlp_ratio = 4;
    std::int64_t max_params = 5'000'000;
};

// Linear dimension alignment followed by self-attention distribution
// alignment; token count is preserved end to end.
class AlignmentModule {
public:
    AlignmentModule(AlignmentConfig cfg, std::uint64_t seed);

    const AlignmentConfig& config() const { return cfg_; }
    core::ParamStore& params() { return params_; }
    const core::ParamStore& params() const { return params_; }

    Var forward(const Var& tokens) const;          // [N, M_m] -> [N, M_s]
    core::Tensor align(const MAEPrior& prior) const;  // produces C_MAE

private:
    AlignmentConfig cfg_;
    core::ParamStore params_;
    Var dim_w_, dim_b_;
    std::vector<models::BlockWeights> blocks_;
};

// Misalignment handling: p decays linearly from p0 to p_final over
// decay_steps, then freezes.
struct PriorSchedule {
    double p0 = 1.0;
    double p_final = 0.1;
    std::int64_t decay_steps = 2000;

    double p(std::int64_t step) const;
};

double schedule_p(std::int64_t step);  // default PriorSchedule

// Returns the reconstructed prior with probability p(step), else the
// predicted one. Drawn per call (per training sample).
const MAEPrior& choose_prior(core::RngStream& rng, std::int64_t step, const MAEPrior& predicted,
                             const MAEPrior& reconstructed,
                             const PriorSchedule& schedule = PriorSchedule{});

struct TraceRow {
    std::int64_t step;
    double loss;
    double p;
    double lr;
};

struct AlignTrainOptions {
    int steps = 2000;
    int batch = 2;
    double lr = 5e-2;
    std::uint64_t seed = 0;
    PriorSchedule prior_schedule;
};

// Thrown when a frozen model's parameters change during training.
struct FrozenViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Trains the alignment module with the generation objective against a frozen
// generator, MAE and VAE encoder. Only alignment parameters change.
std::vector<TraceRow> train_alignment(AlignmentModule& alignment,
                                      const std::vector<core::Image>& corpus,
                                      const std::vector<masks::Mask>& object_pool,
                                      const models::ToyMae& mae, const models::ToyVae& vae,
                                      const models::ToyDenoiser& generator,
                                      const sched::NoiseSchedule& schedule,
                                      const AlignTrainOptions& opts);

// Shared helpers for the training pipelines.
masks::PatchMask mae_patch_mask(const masks::Mask& pixel_mask, std::int64_t patch,
                                double target_ratio, core::RngStream& rng);
core::Tensor latent_mask_tensor(const masks::Mask& mask, int factor);
core::Image masked_image(const core::Image& image, const masks::Mask& mask);

}  // namespace asuka::align
