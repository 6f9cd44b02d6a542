#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "asuka/align/alignment.hpp"
#include "asuka/models/denoiser.hpp"

namespace asuka::inject {

using core::Tensor;
using models::Var;

// Low-rank additive update to a frozen weight: dW = scale * down * up.
struct LoRAAdapter {
    Var down;  // [M, r]
    Var up;    // [r, M]
    double scale = 1.0;
    std::int64_t rank = 0;
};

// Linear + sigmoid gate, one per component j in {q,k,v} per layer.
struct GateModule {
    Var w;  // [M, M]
    Var b;  // [M]
};

struct PositionalScaling {
    double r_img = 0.0;           // latent grid resolution
    double r_mae = 0.0;           // MAE condition grid resolution
    std::int64_t patches_per_axis = 0;  // P

    double scale() const { return r_img / r_mae; }
};

// Row-major grid {(r*S, c*S)} for r,c in [0,P); length P^2.
Tensor scaled_pos_ids(const PositionalScaling& ps);

struct FusedQkv {
    Var q, k, v;
};

// The per-layer fusion: for each j,
//   f_mae_j  = (W_j + dW_j) f_mae
//   f_task_j = W_j f_task
//   f_j      = f_task_j + G_j(f_mae + f_task) (.) f_mae_j
// gate_scale multiplies the gate output; 0 forces the closed-gate path.
FusedQkv fuse_condition(const Var& f_task, const Var& f_mae, const std::array<Var, 3>& frozen_qkv,
                        const std::array<LoRAAdapter, 3>& adapters,
                        const std::array<GateModule, 3>& gates, double gate_scale = 1.0);

struct InjectionConfig {
    std::int64_t width = 128;  // M_s
    int layers = 4;
    std::int64_t rank = 8;
    double lora_scale = 1.0;
    std::int64_t n_task = 16;       // equals N_m so the elementwise fusion is defined
    double gate_bias_init = -4.0;   // sigmoid ~ 0.018, training starts near the base model
    std::int64_t max_params = 5'000'000;
};

// Learnable injection state: task prompt plus per-layer adapters and gates.
class InjectionModules {
public:
    InjectionModules(InjectionConfig cfg, std::uint64_t seed);

    const InjectionConfig& config() const { return cfg_; }
    core::ParamStore& params() { return params_; }
    const core::ParamStore& params() const { return params_; }

    const Var& task_prompt() const { return task_prompt_; }
    const std::array<LoRAAdapter, 3>& adapters(int layer) const {
        return adapters_.at(std::size_t(layer));
    }
    const std::array<GateModule, 3>& gates(int layer) const { return gates_.at(std::size_t(layer)); }

private:
    InjectionConfig cfg_;
    core::ParamStore params_;
    Var task_prompt_;
    std::vector<std::array<LoRAAdapter, 3>> adapters_;
    std::vector<std::array<GateModule, 3>> gates_;
};

struct ConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Injected-model handle: frozen token-input denoiser + trainable
// {injection, alignment}. Sequence length is never increased.
class InjectedModel {
public:
    InjectedModel(const models::ToyDenoiser& denoiser, InjectionModules& injection,
                  align::AlignmentModule& alignment, PositionalScaling ps);

    // gate_scale 1 = learned gates; 0 = closed gates (base-model equivalence)
    Var forward(const Tensor& z_t, const Tensor& z_masked, const Tensor& latent_mask,
                const models::MAEPrior& prior, std::int64_t t, double gate_scale = 1.0) const;

    core::Tensor predict(const Tensor& z_t, const Tensor& z_masked, const Tensor& latent_mask,
                         const models::MAEPrior& prior, std::int64_t t,
                         double gate_scale = 1.0) const;

    // The base model under the same task prompt and positional ids, no MAE.
    core::Tensor predict_base(const Tensor& z_t, const Tensor& z_masked,
                              const Tensor& latent_mask, std::int64_t t) const;

    const models::ToyDenoiser& denoiser() const { return *denoiser_; }
    const Tensor& cond_pos_ids() const { return pos_ids_; }

private:
    const models::ToyDenoiser* denoiser_;
    InjectionModules* injection_;
    align::AlignmentModule* alignment_;
    Tensor pos_ids_;
};

InjectedModel attach_injection(const models::ToyDenoiser& denoiser, InjectionModules& injection,
                               align::AlignmentModule& alignment, const PositionalScaling& ps);

struct InjectTrainOptions {
    int steps = 2000;
    int batch = 2;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    align::PriorSchedule prior_schedule;
};

// Trains {adapters, gates, task prompt, alignment} against the frozen
// backbone; returns the loss trace.
std::vector<align::TraceRow> train_inject(InjectedModel& model, InjectionModules& injection,
                                          align::AlignmentModule& alignment,
                                          const std::vector<core::Image>& corpus,
                                          const std::vector<masks::Mask>& object_pool,
                                          const models::ToyMae& mae, const models::ToyVae& vae,
                                          const sched::NoiseSchedule& schedule,
                                          const InjectTrainOptions& opts);

}  // namespace asuka::inject
