#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>

#include "asuka/core/rng.hpp"
#include "asuka/core/tensor.hpp"

namespace asuka::sched {

enum class ScheduleFamily { diffusion, rectified_flow };

// What the denoiser callback predicts. Velocity targets are remapped to an
// equivalent noise prediction before the one-step inversion formula.
enum class PredictionTarget { epsilon, velocity };

// Forward-process coefficients z_t = a(t) z0 + b(t) eps over integer
// timesteps [0, T). Diffusion uses the cosine alpha-bar schedule with
// a^2 + b^2 = 1; rectified flow uses the linear a = 1 - t/T with a + b = 1.
struct NoiseSchedule {
    ScheduleFamily family = ScheduleFamily::diffusion;
    std::int64_t T = 1000;

    double a(std::int64_t t) const;
    double b(std::int64_t t) const;

    void check_t(std::int64_t t) const {
        if (t < 0 || t >= T) throw std::invalid_argument("schedule: t out of [0,T)");
    }
};

struct AbCoeffs {
    double a;
    double b;
};

AbCoeffs ab_coeffs(const NoiseSchedule& schedule, std::int64_t t);

// Forward-process sample: z_t = a(t) z0 + b(t) eps, exact by construction.
struct LatentState {
    core::Tensor z0;
    core::Tensor z_t;
    std::int64_t t = 0;
    core::Tensor eps;
};

LatentState make_latent_state(const NoiseSchedule& schedule, core::Tensor z0, std::int64_t t,
                              core::RngStream& rng);

// Denoiser callback: (z_t, z0_cond, t) -> prediction. The all-zero mask of
// the conditioning regime is implied; model-backed callers bind it.
using DenoiserFn = std::function<core::Tensor(const core::Tensor& z_t,
                                              const core::Tensor& z0_cond,
                                              std::int64_t t)>;

// One-step clean-latent estimate: z0_hat = (z_t - b(t) * eps_hat) / a(t).
core::Tensor one_step_estimate(const core::Tensor& z_t, std::int64_t t,
                               const DenoiserFn& denoiser, PredictionTarget target,
                               const core::Tensor& z0_cond, const NoiseSchedule& schedule);

}  // namespace asuka::sched
