#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "asuka/models/nn.hpp"
#include "asuka/sched/noise_schedule.hpp"

namespace asuka::models {

// How the condition stream reaches the generator:
//   cross_attention — condition is fixed K/V for a per-layer cross-attention
//                     sublayer (U-Net style);
//   token_input     — condition tokens join the latent tokens in a joint
//                     self-attention and are transformed layer by layer
//                     (MMDiT style), with per-layer QKV hooks for injection.
enum class CondMode { cross_attention, token_input };

struct DenoiserConfig {
    std::int64_t latent_channels = 4;
    std::int64_t width = 128;  // M_s
    int layers = 4;
    int heads = 4;
    int mlp_ratio = 2;
    CondMode mode = CondMode::token_input;
    std::int64_t max_params = 5'000'000;

    std::int64_t input_channels() const { return 2 * latent_channels + 1; }
};

// Learnable task tokens, aligned MAE tokens and their 2-D positional IDs, as
// consumed by the injection layer. Either token field may be empty depending
// on the conditioning path.
struct ConditionBundle {
    core::Tensor task_tokens;  // N x M_s (token_input path)
    core::Tensor mae_tokens;   // N x M_s (aligned condition)
    core::Tensor pos_ids;      // N x 2
};

// Per-layer substitution of the condition stream's QKV computation. Receives
// the layer index and the post-norm condition tokens; returns {q, k, v}.
using CondQkvHook = std::function<std::array<Var, 3>(int layer, const Var& cond_ln)>;

// Conditional eps/velocity predictor over latent grids. Input channel layout
// is noise (+) masked-latent (+) mask.
class ToyDenoiser {
public:
    ToyDenoiser(DenoiserConfig cfg, std::uint64_t seed);

    const DenoiserConfig& config() const { return cfg_; }
    core::ParamStore& params() { return params_; }
    const core::ParamStore& params() const { return params_; }

    // Graph-building forward. z_t/z_masked: [C,H,W]; latent_mask: [1,H,W];
    // cond_tokens: [N,M_s] (gradient flows into it); cond_pos_ids: [N,2].
    Var forward(const core::Tensor& z_t, const core::Tensor& z_masked,
                const core::Tensor& latent_mask, const Var& cond_tokens,
                const core::Tensor& cond_pos_ids, std::int64_t t,
                const CondQkvHook* hook = nullptr) const;

    // Inference wrapper returning a plain tensor.
    core::Tensor predict(const core::Tensor& z_t, const core::Tensor& z_masked,
                         const core::Tensor& latent_mask, const ConditionBundle& cond,
                         std::int64_t t, const CondQkvHook* hook = nullptr) const;

    // Binds the Eq-style conditioning regime (clean latent + all-zero mask)
    // into a schedules-layer denoiser callback.
    sched::DenoiserFn bind_clean_conditioning(const ConditionBundle& cond) const;

    // Frozen per-layer QKV maps, exposed for the injection hook.
    std::array<Var, 3> layer_qkv(int layer) const;

    // Joint-attention token counts recorded by the most recent forward.
    const std::vector<std::int64_t>& last_attention_lengths() const { return seq_lens_; }

private:
    Var cond_entry(const Var& cond_tokens, const core::Tensor& cond_pos_ids) const;

    DenoiserConfig cfg_;
    core::ParamStore params_;
    Var in_w_, in_b_;
    Var t_w1_, t_b1_, t_w2_, t_b2_;

    struct Layer {
        Var ln1_g, ln1_b;
        AttentionWeights attn;      // joint attention (token_input) or latent self-attention
        Var lnx_g, lnx_b;           // cross_attention mode only
        AttentionWeights cross;     // cross_attention mode only
        Var ln2_g, ln2_b;
        MlpWeights mlp;
    };
    std::vector<Layer> layers_;
    Var out_ln_g_, out_ln_b_, out_w_, out_b_;
    mutable std::vector<std::int64_t> seq_lens_;
};

}  // namespace asuka::models
