#pragma once

#include <array>
#include <string>
#include <vector>

#include "asuka/core/autodiff.hpp"
#include "asuka/core/rng.hpp"

namespace asuka::models {

using core::ParamStore;
using core::Tensor;
using core::Var;

// Pre-norm transformer pieces shared by the MAE, the alignment module and the
// toy denoiser. Weights multiply on the right: y = x W, x is [tokens, width].

struct AttentionWeights {
    Var wq, wk, wv, wo;  // each [M, M]
};

struct MlpWeights {
    Var w1, b1, w2, b2;  // width -> ratio*width -> width
};

struct BlockWeights {
    Var ln1_g, ln1_b;
    AttentionWeights attn;
    Var ln2_g, ln2_b;
    MlpWeights mlp;
};

AttentionWeights make_attention(ParamStore& params, const std::string& prefix, std::int64_t width,
                                core::RngStream& rng);
MlpWeights make_mlp(ParamStore& params, const std::string& prefix, std::int64_t width,
                    std::int64_t hidden, core::RngStream& rng);
BlockWeights make_block(ParamStore& params, const std::string& prefix, std::int64_t width,
                        int mlp_ratio, core::RngStream& rng);

// Multi-head scaled dot-product attention from explicit q/k/v token streams.
Var attention_from_qkv(const Var& q, const Var& k, const Var& v, int heads);

// q_in attends to kv_in (self-attention when they coincide).
Var multihead_attention(const Var& q_in, const Var& kv_in, const AttentionWeights& w, int heads);

Var mlp_forward(const Var& x, const MlpWeights& w);

// x + Attn(LN(x)); x + MLP(LN(x))
Var transformer_block(const Var& x, const BlockWeights& w, int heads);

// Sinusoidal features of a scalar position over `width` dims.
void sinusoid_into(double pos, double* out, std::int64_t width);

// 2-D sinusoidal encoding of (row, col) ids: width/2 dims per axis.
Tensor positional_encoding_2d(const Tensor& ids, std::int64_t width);  // ids: [N,2]

// Sinusoidal timestep embedding, shape [width].
Tensor timestep_embedding(std::int64_t t, std::int64_t width);

}  // namespace asuka::models
