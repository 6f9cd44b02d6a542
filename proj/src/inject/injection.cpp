#include "asuka/inject/injection.hpp"

#include <cmath>

#include "asuka/core/checkpoint.hpp"
#include "asuka/core/optim.hpp"

namespace asuka::inject {

using namespace asuka::core;
using namespace asuka::models;

Tensor scaled_pos_ids(const PositionalScaling& ps) {
    if (ps.patches_per_axis < 1) throw std::invalid_argument("scaled_pos_ids: P must be >= 1");
    const double S = ps.scale();
    if (!(S > 0.0)) throw std::invalid_argument("scaled_pos_ids: scale must be positive");
    const std::int64_t P = ps.patches_per_axis;
    Tensor ids({P * P, 2});
    for (std::int64_t r = 0; r < P; ++r)
        for (std::int64_t c = 0; c < P; ++c) {
            ids.at2(r * P + c, 0) = double(r) * S;
            ids.at2(r * P + c, 1) = double(c) * S;
        }
    return ids;
}

FusedQkv fuse_condition(const Var& f_task, const Var& f_mae, const std::array<Var, 3>& frozen_qkv,
                        const std::array<LoRAAdapter, 3>& adapters,
                        const std::array<GateModule, 3>& gates, double gate_scale) {
    if (f_task->value.rank() != 2 || f_mae->value.rank() != 2 ||
        f_task->value.dim(1) != f_mae->value.dim(1))
        throw std::invalid_argument("fuse_condition: width mismatch between task and MAE tokens");
    if (f_task->value.dim(0) != f_mae->value.dim(0))
        throw std::invalid_argument("fuse_condition: token counts must match for elementwise fusion");

    const Var gate_in = add(f_mae, f_task);
    std::array<Var, 3> fused;
    for (int j = 0; j < 3; ++j) {
        const Var& W = frozen_qkv[std::size_t(j)];
        const auto& lora = adapters[std::size_t(j)];
        const auto& gate = gates[std::size_t(j)];
        // f_mae_j = (W + dW) f_mae with dW = scale * down * up
        Var f_mae_j = matmul(f_mae, W);
        f_mae_j = add(f_mae_j, scale(matmul(matmul(f_mae, lora.down), lora.up), lora.scale));
        const Var f_task_j = matmul(f_task, W);
        Var g = sigmoid(add_rowvec(matmul(gate_in, gate.w), gate.b));
        if (gate_scale != 1.0) g = scale(g, gate_scale);
        fused[std::size_t(j)] = add(f_task_j, mul(g, f_mae_j));
    }
    return FusedQkv{fused[0], fused[1], fused[2]};
}

InjectionModules::InjectionModules(InjectionConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    RngStream rng(seed);
    const std::int64_t M = cfg_.width;
    task_prompt_ = params_.add("task_prompt", Tensor::randn({cfg_.n_task, M}, rng, 0.02));
    const char* jn[3] = {"q", "k", "v"};
    for (int l = 0; l < cfg_.layers; ++l) {
        std::array<LoRAAdapter, 3> layer_adapters;
        std::array<GateModule, 3> layer_gates;
        for (int j = 0; j < 3; ++j) {
            const std::string p = "layer" + std::to_string(l) + "." + jn[j];
            LoRAAdapter a;
            a.down = params_.add(p + ".lora.down",
                                 Tensor::randn({M, cfg_.rank}, rng, 1.0 / std::sqrt(double(M))));
            a.up = params_.add(p + ".lora.up", Tensor::zeros({cfg_.rank, M}));
            a.scale = cfg_.lora_scale;
            a.rank = cfg_.rank;
            layer_adapters[std::size_t(j)] = a;
            GateModule g;
            g.w = params_.add(p + ".gate.w", Tensor::zeros({M, M}));
            g.b = params_.add(p + ".gate.b", Tensor::full({M}, cfg_.gate_bias_init));
            layer_gates[std::size_t(j)] = g;
        }
        adapters_.push_back(layer_adapters);
        gates_.push_back(layer_gates);
    }
    if (params_.param_count() > cfg_.max_params)
        throw std::invalid_argument("InjectionModules: parameter ceiling exceeded");
}

InjectedModel::InjectedModel(const ToyDenoiser& denoiser, InjectionModules& injection,
                             align::AlignmentModule& alignment, PositionalScaling ps)
    : denoiser_(&denoiser), injection_(&injection), alignment_(&alignment) {
    if (denoiser.config().mode != CondMode::token_input)
        throw ConfigurationError("attach_injection: denoiser does not expose per-layer QKV hooks");
    if (denoiser.config().width != injection.config().width ||
        alignment.config().out_width != injection.config().width)
        throw ConfigurationError("attach_injection: width mismatch");
    if (denoiser.config().layers != injection.config().layers)
        throw ConfigurationError("attach_injection: layer count mismatch");
    pos_ids_ = scaled_pos_ids(ps);
    if (pos_ids_.dim(0) != injection.config().n_task)
        throw ConfigurationError("attach_injection: task prompt count must equal P^2");
}

Var InjectedModel::forward(const Tensor& z_t, const Tensor& z_masked, const Tensor& latent_mask,
                           const MAEPrior& prior, std::int64_t t, double gate_scale) const {
    if (prior.rows * prior.cols != injection_->config().n_task)
        throw std::invalid_argument("InjectedModel: prior token count must match the task prompt");
    const Var f_mae = alignment_->forward(constant(prior.tokens));
    const CondQkvHook hook = [this, &f_mae, gate_scale](int layer, const Var& cond_ln) {
        const auto fused =
            fuse_condition(cond_ln, f_mae, denoiser_->layer_qkv(layer),
                           injection_->adapters(layer), injection_->gates(layer), gate_scale);
        return std::array<Var, 3>{fused.q, fused.k, fused.v};
    };
    return denoiser_->forward(z_t, z_masked, latent_mask, injection_->task_prompt(), pos_ids_, t,
                              &hook);
}

Tensor InjectedModel::predict(const Tensor& z_t, const Tensor& z_masked, const Tensor& latent_mask,
                              const MAEPrior& prior, std::int64_t t, double gate_scale) const {
    return forward(z_t, z_masked, latent_mask, prior, t, gate_scale)->value;
}

Tensor InjectedModel::predict_base(const Tensor& z_t, const Tensor& z_masked,
                                   const Tensor& latent_mask, std::int64_t t) const {
    return denoiser_
        ->forward(z_t, z_masked, latent_mask, injection_->task_prompt(), pos_ids_, t, nullptr)
        ->value;
}

InjectedModel attach_injection(const ToyDenoiser& denoiser, InjectionModules& injection,
                               align::AlignmentModule& alignment, const PositionalScaling& ps) {
    return InjectedModel(denoiser, injection, alignment, ps);
}

std::vector<align::TraceRow> train_inject(InjectedModel& model, InjectionModules& injection,
                                          align::AlignmentModule& alignment,
                                          const std::vector<core::Image>& corpus,
                                          const std::vector<masks::Mask>& object_pool,
                                          const ToyMae& mae, const ToyVae& vae,
                                          const sched::NoiseSchedule& schedule,
                                          const InjectTrainOptions& opts) {
    if (corpus.empty()) throw std::invalid_argument("train_inject: empty corpus");

    auto frozen_digest = [&]() {
        std::string acc;
        for (const auto* store :
             {&model.denoiser().params(), &mae.params(), &vae.encoder_params()}) {
            for (const auto& [name, v] : store->items()) {
                acc += name;
                acc.append(reinterpret_cast<const char*>(v->value.data.data()),
                           v->value.data.size() * sizeof(double));
            }
        }
        return sha256_hex(acc);
    };
    const std::string digest_before = frozen_digest();
    set_store_trainable(model.denoiser().params(), false);
    set_store_trainable(mae.params(), false);
    set_store_trainable(vae.encoder_params(), false);

    // one optimizer over the full trainable set: injection + alignment
    ParamStore joint;
    for (auto& [name, v] : injection.params().items()) joint.items().emplace_back("inject." + name, v);
    for (auto& [name, v] : alignment.params().items()) joint.items().emplace_back("align." + name, v);
    AdamW opt(joint, {.lr = opts.lr});

    const std::int64_t img_size = corpus.front().height;
    RngStream rng(opts.seed);
    std::vector<align::TraceRow> trace;
    trace.reserve(std::size_t(opts.steps));

    for (int step = 0; step < opts.steps; ++step) {
        const double p = opts.prior_schedule.p(step);
        joint.zero_grad();
        Var loss;
        for (int b = 0; b < opts.batch; ++b) {
            const core::Image& img =
                corpus[std::size_t(rng.uniform_int(0, std::int64_t(corpus.size()) - 1))];
            const auto sampled = masks::sample_mask(rng, img_size, img_size, object_pool);
            const auto pm = align::mae_patch_mask(sampled.mask, mae.config().patch_size, 0.75, rng);

            const MAEPrior predicted = mae.predict(img, pm);
            const MAEPrior reconstructed = mae.reconstruct(img);
            const MAEPrior& prior =
                align::choose_prior(rng, step, predicted, reconstructed, opts.prior_schedule);

            const Tensor z0 = vae.encode(img);
            const Tensor z_masked = vae.encode(align::masked_image(img, sampled.mask));
            const Tensor lm =
                align::latent_mask_tensor(sampled.mask, models::VaeConfig::downsample_factor);
            const std::int64_t t = rng.uniform_int(0, schedule.T - 1);
            const sched::LatentState st = sched::make_latent_state(schedule, z0, t, rng);

            const Var eps_hat = model.forward(st.z_t, z_masked, lm, prior, t);
            const Var sample_loss = mse_loss(eps_hat, st.eps);
            loss = loss ? add(loss, sample_loss) : sample_loss;
        }
        loss = scale(loss, 1.0 / double(opts.batch));
        backward(loss);
        opt.step();
        trace.push_back(align::TraceRow{step, loss->value.data[0], p, opts.lr});
    }

    if (frozen_digest() != digest_before)
        throw align::FrozenViolationError("train_inject: frozen parameters changed");
    return trace;
}

}  // namespace asuka::inject
