#include "asuka/models/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace asuka::models {

using namespace asuka::core;

AttentionWeights make_attention(ParamStore& params, const std::string& prefix, std::int64_t width,
                                RngStream& rng) {
    const double std = 1.0 / std::sqrt(double(width));
    AttentionWeights w;
    w.wq = params.add(prefix + ".wq", Tensor::randn({width, width}, rng, std));
    w.wk = params.add(prefix + ".wk", Tensor::randn({width, width}, rng, std));
    w.wv = params.add(prefix + ".wv", Tensor::randn({width, width}, rng, std));
    w.wo = params.add(prefix + ".wo", Tensor::randn({width, width}, rng, std));
    return w;
}

MlpWeights make_mlp(ParamStore& params, const std::string& prefix, std::int64_t width,
                    std::int64_t hidden, RngStream& rng) {
    MlpWeights w;
    w.w1 = params.add(prefix + ".w1", Tensor::randn({width, hidden}, rng, 1.0 / std::sqrt(double(width))));
    w.b1 = params.add(prefix + ".b1", Tensor::zeros({hidden}));
    w.w2 = params.add(prefix + ".w2", Tensor::randn({hidden, width}, rng, 1.0 / std::sqrt(double(hidden))));
    w.b2 = params.add(prefix + ".b2", Tensor::zeros({width}));
    return w;
}

BlockWeights make_block(ParamStore& params, const std::string& prefix, std::int64_t width,
                        int mlp_ratio, RngStream& rng) {
    BlockWeights b;
    b.ln1_g = params.add(prefix + ".ln1.g", Tensor::full({width}, 1.0));
    b.ln1_b = params.add(prefix + ".ln1.b", Tensor::zeros({width}));
    b.attn = make_attention(params, prefix + ".attn", width, rng);
    b.ln2_g = params.add(prefix + ".ln2.g", Tensor::full({width}, 1.0));
    b.ln2_b = params.add(prefix + ".ln2.b", Tensor::zeros({width}));
    b.mlp = make_mlp(params, prefix + ".mlp", width, width * mlp_ratio, rng);
    return b;
}

Var attention_from_qkv(const Var& q, const Var& k, const Var& v, int heads) {
    const std::int64_t M = q->value.dim(1);
    if (M % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
    const std::int64_t dh = M / heads;
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    std::vector<Var> head_outs;
    head_outs.reserve(std::size_t(heads));
    for (int h = 0; h < heads; ++h) {
        const auto qh = slice_cols(q, h * dh, (h + 1) * dh);
        const auto kh = slice_cols(k, h * dh, (h + 1) * dh);
        const auto vh = slice_cols(v, h * dh, (h + 1) * dh);
        const auto att = softmax_rows(scale(matmul(qh, kh, false, true), inv_sqrt));
        head_outs.push_back(matmul(att, vh));
    }
    return concat_cols(head_outs);
}

Var multihead_attention(const Var& q_in, const Var& kv_in, const AttentionWeights& w, int heads) {
    const auto q = matmul(q_in, w.wq);
    const auto k = matmul(kv_in, w.wk);
    const auto v = matmul(kv_in, w.wv);
    return matmul(attention_from_qkv(q, k, v, heads), w.wo);
}

Var mlp_forward(const Var& x, const MlpWeights& w) {
    return add_rowvec(matmul(silu(add_rowvec(matmul(x, w.w1), w.b1)), w.w2), w.b2);
}

Var transformer_block(const Var& x, const BlockWeights& w, int heads) {
    const auto xn = layernorm_rows(x, w.ln1_g, w.ln1_b);
    const auto h = add(x, multihead_attention(xn, xn, w.attn, heads));
    return add(h, mlp_forward(layernorm_rows(h, w.ln2_g, w.ln2_b), w.mlp));
}

void sinusoid_into(double pos, double* out, std::int64_t width) {
    const std::int64_t half = width / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -double(i) / double(half));
        out[i] = std::sin(pos * freq);
        out[half + i] = std::cos(pos * freq);
    }
    if (width % 2 == 1) out[width - 1] = 0.0;
}

Tensor positional_encoding_2d(const Tensor& ids, std::int64_t width) {
    if (ids.rank() != 2 || ids.dim(1) != 2)
        throw std::invalid_argument("positional_encoding_2d: ids must be [N,2]");
    if (width % 2 != 0) throw std::invalid_argument("positional_encoding_2d: width must be even");
    const std::int64_t n = ids.dim(0);
    const std::int64_t half = width / 2;
    Tensor out({n, width});
    for (std::int64_t i = 0; i < n; ++i) {
        sinusoid_into(ids.at2(i, 0), out.data.data() + i * width, half);
        sinusoid_into(ids.at2(i, 1), out.data.data() + i * width + half, half);
    }
    return out;
}

Tensor timestep_embedding(std::int64_t t, std::int64_t width) {
    Tensor out({width});
    sinusoid_into(double(t), out.data.data(), width);
    return out;
}

}  // namespace asuka::models
