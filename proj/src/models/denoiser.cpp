#include "asuka/models/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace asuka::models {

using namespace asuka::core;

ToyDenoiser::ToyDenoiser(DenoiserConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    RngStream rng(seed);
    const std::int64_t M = cfg_.width;
    const std::int64_t Cin = cfg_.input_channels();
    in_w_ = params_.add("in_proj.w", Tensor::randn({Cin, M}, rng, 1.0 / std::sqrt(double(Cin))));
    in_b_ = params_.add("in_proj.b", Tensor::zeros({M}));
    t_w1_ = params_.add("t_mlp.w1", Tensor::randn({M, M}, rng, 1.0 / std::sqrt(double(M))));
    t_b1_ = params_.add("t_mlp.b1", Tensor::zeros({M}));
    t_w2_ = params_.add("t_mlp.w2", Tensor::randn({M, M}, rng, 1.0 / std::sqrt(double(M))));
    t_b2_ = params_.add("t_mlp.b2", Tensor::zeros({M}));
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        Layer layer;
        layer.ln1_g = params_.add(p + ".ln1.g", Tensor::full({M}, 1.0));
        layer.ln1_b = params_.add(p + ".ln1.b", Tensor::zeros({M}));
        layer.attn = make_attention(params_, p + ".attn", M, rng);
        if (cfg_.mode == CondMode::cross_attention) {
            layer.lnx_g = params_.add(p + ".lnx.g", Tensor::full({M}, 1.0));
            layer.lnx_b = params_.add(p + ".lnx.b", Tensor::zeros({M}));
            layer.cross = make_attention(params_, p + ".cross", M, rng);
        }
        layer.ln2_g = params_.add(p + ".ln2.g", Tensor::full({M}, 1.0));
        layer.ln2_b = params_.add(p + ".ln2.b", Tensor::zeros({M}));
        layer.mlp = make_mlp(params_, p + ".mlp", M, M * cfg_.mlp_ratio, rng);
        layers_.push_back(std::move(layer));
    }
    out_ln_g_ = params_.add("out_ln.g", Tensor::full({M}, 1.0));
    out_ln_b_ = params_.add("out_ln.b", Tensor::zeros({M}));
    out_w_ = params_.add("out_proj.w",
                         Tensor::randn({M, cfg_.latent_channels}, rng, 1.0 / std::sqrt(double(M))));
    out_b_ = params_.add("out_proj.b", Tensor::zeros({cfg_.latent_channels}));
    if (params_.param_count() > cfg_.max_params)
        throw std::invalid_argument("ToyDenoiser: parameter ceiling exceeded");
}

std::array<Var, 3> ToyDenoiser::layer_qkv(int layer) const {
    const auto& l = layers_.at(std::size_t(layer));
    return {l.attn.wq, l.attn.wk, l.attn.wv};
}

Var ToyDenoiser::cond_entry(const Var& cond_tokens, const Tensor& cond_pos_ids) const {
    if (cond_tokens->value.rank() != 2 || cond_tokens->value.dim(1) != cfg_.width)
        throw std::invalid_argument("denoiser: condition width mismatch");
    if (cond_pos_ids.rank() != 2 || cond_pos_ids.dim(0) != cond_tokens->value.dim(0) ||
        cond_pos_ids.dim(1) != 2)
        throw std::invalid_argument("denoiser: condition pos-id shape mismatch");
    return add_const(cond_tokens, positional_encoding_2d(cond_pos_ids, cfg_.width));
}

Var ToyDenoiser::forward(const Tensor& z_t, const Tensor& z_masked, const Tensor& latent_mask,
                         const Var& cond_tokens, const Tensor& cond_pos_ids, std::int64_t t,
                         const CondQkvHook* hook) const {
    const std::int64_t C = cfg_.latent_channels;
    if (z_t.rank() != 3 || z_t.dim(0) != C)
        throw std::invalid_argument("denoiser: z_t must be [C,H,W]");
    if (!z_masked.same_shape(z_t)) throw std::invalid_argument("denoiser: z_masked shape mismatch");
    const std::int64_t H = z_t.dim(1), W = z_t.dim(2);
    if (latent_mask.rank() != 3 || latent_mask.dim(0) != 1 || latent_mask.dim(1) != H ||
        latent_mask.dim(2) != W)
        throw std::invalid_argument("denoiser: latent mask must be [1,H,W]");
    seq_lens_.clear();

    // channel concat: noise (+) masked latent (+) mask
    Tensor input({2 * C + 1, H, W});
    std::copy(z_t.data.begin(), z_t.data.end(), input.data.begin());
    std::copy(z_masked.data.begin(), z_masked.data.end(), input.data.begin() + C * H * W);
    std::copy(latent_mask.data.begin(), latent_mask.data.end(), input.data.begin() + 2 * C * H * W);

    auto x = add_rowvec(matmul(chw_to_tokens(constant(input)), in_w_), in_b_);
    // latent grid positions
    Tensor latent_ids({H * W, 2});
    for (std::int64_t r = 0; r < H; ++r)
        for (std::int64_t c = 0; c < W; ++c) {
            latent_ids.at2(r * W + c, 0) = double(r);
            latent_ids.at2(r * W + c, 1) = double(c);
        }
    x = add_const(x, positional_encoding_2d(latent_ids, cfg_.width));
    // timestep features enter additively on every latent token
    Tensor t_row({1, cfg_.width});
    t_row.data = timestep_embedding(t, cfg_.width).data;
    const auto t_feat = add_rowvec(
        matmul(silu(add_rowvec(matmul(constant(t_row), t_w1_), t_b1_)), t_w2_), t_b2_);
    Tensor ones({H * W, 1});
    ones.fill(1.0);
    x = add(x, matmul(constant(ones), t_feat));

    const std::int64_t Nl = H * W;
    if (cfg_.mode == CondMode::cross_attention) {
        const auto cond = cond_entry(cond_tokens, cond_pos_ids);
        for (const auto& l : layers_) {
            const auto xn = layernorm_rows(x, l.ln1_g, l.ln1_b);
            x = add(x, multihead_attention(xn, xn, l.attn, cfg_.heads));
            seq_lens_.push_back(Nl);
            const auto xq = layernorm_rows(x, l.lnx_g, l.lnx_b);
            x = add(x, multihead_attention(xq, cond, l.cross, cfg_.heads));
            x = add(x, mlp_forward(layernorm_rows(x, l.ln2_g, l.ln2_b), l.mlp));
        }
    } else {
        auto cond = cond_entry(cond_tokens, cond_pos_ids);
        const std::int64_t Nc = cond->value.dim(0);
        int layer_idx = 0;
        for (const auto& l : layers_) {
            auto joint = concat_rows({cond, x});
            seq_lens_.push_back(joint->value.dim(0));
            const auto n = layernorm_rows(joint, l.ln1_g, l.ln1_b);
            const auto nc = slice_rows(n, 0, Nc);
            const auto nx = slice_rows(n, Nc, Nc + Nl);
            std::array<Var, 3> cond_qkv;
            if (hook) {
                cond_qkv = (*hook)(layer_idx, nc);
            } else {
                cond_qkv = {matmul(nc, l.attn.wq), matmul(nc, l.attn.wk), matmul(nc, l.attn.wv)};
            }
            const auto q = concat_rows({cond_qkv[0], matmul(nx, l.attn.wq)});
            const auto k = concat_rows({cond_qkv[1], matmul(nx, l.attn.wk)});
            const auto v = concat_rows({cond_qkv[2], matmul(nx, l.attn.wv)});
            const auto att = matmul(attention_from_qkv(q, k, v, cfg_.heads), l.attn.wo);
            joint = add(joint, att);
            joint = add(joint, mlp_forward(layernorm_rows(joint, l.ln2_g, l.ln2_b), l.mlp));
            cond = slice_rows(joint, 0, Nc);
            x = slice_rows(joint, Nc, Nc + Nl);
            ++layer_idx;
        }
    }
    const auto out_tokens = add_rowvec(matmul(layernorm_rows(x, out_ln_g_, out_ln_b_), out_w_), out_b_);
    return tokens_to_chw(out_tokens, C, H, W);
}

Tensor ToyDenoiser::predict(const Tensor& z_t, const Tensor& z_masked, const Tensor& latent_mask,
                            const ConditionBundle& cond, std::int64_t t,
                            const CondQkvHook* hook) const {
    const Tensor& tokens =
        cfg_.mode == CondMode::cross_attention ? cond.mae_tokens : cond.task_tokens;
    return forward(z_t, z_masked, latent_mask, constant(tokens), cond.pos_ids, t, hook)->value;
}

sched::DenoiserFn ToyDenoiser::bind_clean_conditioning(const ConditionBundle& cond) const {
    return [this, cond](const Tensor& z_t, const Tensor& z0_cond, std::int64_t t) {
        Tensor zero_mask({1, z_t.dim(1), z_t.dim(2)});
        return predict(z_t, z0_cond, zero_mask, cond, t);
    };
}

}  // namespace asuka::models
