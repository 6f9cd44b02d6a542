#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <filesystem>

#include "asuka/core/checkpoint.hpp"
#include "asuka/data/toy_corpus.hpp"
#include "asuka/inject/injection.hpp"
#include "test_util.hpp"

using namespace asuka;
using namespace asuka::inject;
using core::RngStream;
using core::Tensor;
using core::Var;

namespace {

// Independent straight-line evaluation of the three fusion equations using
// raw loops; shares no code with fuse_condition.
struct FusionOracle {
    // all matrices row-major [rows, cols]
    static std::vector<double> matmul_raw(const std::vector<double>& a, std::int64_t n,
                                          std::int64_t k, const std::vector<double>& b,
                                          std::int64_t m) {
        std::vector<double> out(std::size_t(n * m), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double av = a[std::size_t(i * k + kk)];
                for (std::int64_t j = 0; j < m; ++j)
                    out[std::size_t(i * m + j)] += av * b[std::size_t(kk * m + j)];
            }
        return out;
    }

    static std::vector<double> evaluate_j(const Tensor& f_task, const Tensor& f_mae,
                                          const Tensor& W, const Tensor& down, const Tensor& up,
                                          double lora_scale, const Tensor& gw, const Tensor& gb) {
        const std::int64_t N = f_task.dim(0), M = f_task.dim(1), r = down.dim(1);
        // f_mae_j = f_mae W + lora_scale * (f_mae down) up
        auto f_mae_j = matmul_raw(f_mae.data, N, M, W.data, M);
        const auto tmp = matmul_raw(f_mae.data, N, M, down.data, r);
        const auto delta = matmul_raw(tmp, N, r, up.data, M);
        for (std::size_t i = 0; i < f_mae_j.size(); ++i) f_mae_j[i] += lora_scale * delta[i];
        // f_task_j = f_task W
        const auto f_task_j = matmul_raw(f_task.data, N, M, W.data, M);
        // g = sigmoid((f_mae + f_task) gw + gb)
        std::vector<double> gate_in(std::size_t(N * M));
        for (std::size_t i = 0; i < gate_in.size(); ++i)
            gate_in[i] = f_mae.data[i] + f_task.data[i];
        auto g = matmul_raw(gate_in, N, M, gw.data, M);
        for (std::int64_t i = 0; i < N; ++i)
            for (std::int64_t j = 0; j < M; ++j) {
                double& x = g[std::size_t(i * M + j)];
                x = 1.0 / (1.0 + std::exp(-(x + gb.data[std::size_t(j)])));
            }
        // f_j = f_task_j + g (.) f_mae_j
        std::vector<double> out(std::size_t(N * M));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f_task_j[i] + g[i] * f_mae_j[i];
        return out;
    }
};

}  // namespace

TEST_CASE("scaled positional ids match the closed-form grid") {
    // S = 1: the unit grid
    const Tensor unit = scaled_pos_ids(PositionalScaling{16, 16, 2});
    REQUIRE(unit.dim(0) == 4);
    CHECK(unit.at2(0, 0) == 0.0);
    CHECK(unit.at2(0, 1) == 0.0);
    CHECK(unit.at2(1, 0) == 0.0);
    CHECK(unit.at2(1, 1) == 1.0);
    CHECK(unit.at2(2, 0) == 1.0);
    CHECK(unit.at2(2, 1) == 0.0);
    CHECK(unit.at2(3, 0) == 1.0);
    CHECK(unit.at2(3, 1) == 1.0);

    // S = 4: second id is (0, S)
    const Tensor s4 = scaled_pos_ids(PositionalScaling{64, 16, 4});
    CHECK(s4.dim(0) == 16);
    CHECK(s4.at2(1, 0) == 0.0);
    CHECK(s4.at2(1, 1) == 4.0);

    // S = 3: max coordinate is 3 * (P - 1)
    const Tensor s3 = scaled_pos_ids(PositionalScaling{48, 16, 5});
    double max_coord = 0.0;
    for (double v : s3.data) max_coord = std::max(max_coord, v);
    CHECK(max_coord == 3.0 * 4.0);

    // coordinates non-negative and monotone along each axis
    for (std::int64_t i = 0; i < s3.dim(0); ++i) {
        REQUIRE(s3.at2(i, 0) >= 0.0);
        REQUIRE(s3.at2(i, 1) >= 0.0);
        if (i % 5 != 0) REQUIRE(s3.at2(i, 1) > s3.at2(i - 1, 1));
        if (i >= 5) REQUIRE(s3.at2(i, 0) > s3.at2(i - 5, 0));
    }

    CHECK_THROWS_AS(scaled_pos_ids(PositionalScaling{0, 16, 4}), std::invalid_argument);
    CHECK_THROWS_AS(scaled_pos_ids(PositionalScaling{64, 16, 0}), std::invalid_argument);
}

TEST_CASE("fuse_condition: annihilation, half-open gate hand check, random oracle") {
    RngStream rng(31);

    SUBCASE("gates forced to 0 reduce to the task path exactly") {
        const std::int64_t N = 3, M = 8, r = 2;
        InjectionConfig cfg;
        cfg.width = M;
        cfg.layers = 1;
        cfg.rank = r;
        cfg.n_task = N;
        InjectionModules inj(cfg, 33);
        const Tensor f_task_t = Tensor::randn({N, M}, rng);
        const Tensor f_mae_t = Tensor::randn({N, M}, rng);
        std::array<Var, 3> W = {core::make_param(Tensor::randn({M, M}, rng)),
                                core::make_param(Tensor::randn({M, M}, rng)),
                                core::make_param(Tensor::randn({M, M}, rng))};
        const auto fused = fuse_condition(core::constant(f_task_t), core::constant(f_mae_t), W,
                                          inj.adapters(0), inj.gates(0), 0.0);
        const Var direct_q = core::matmul(core::constant(f_task_t), W[0]);
        CHECK(core::max_abs_diff(fused.q->value, direct_q->value) == 0.0);
    }

    SUBCASE("dW = 0, gate exactly 1/2: hand computation on 2 tokens, M_s = 4") {
        const std::int64_t N = 2, M = 4;
        // identity W, zero LoRA, zero gate weights and bias -> g = 0.5
        Tensor Wt = Tensor::zeros({M, M});
        for (std::int64_t i = 0; i < M; ++i) Wt.at2(i, i) = 1.0;
        std::array<Var, 3> W = {core::make_param(Wt), core::make_param(Wt), core::make_param(Wt)};
        std::array<LoRAAdapter, 3> adapters;
        std::array<GateModule, 3> gates;
        for (int j = 0; j < 3; ++j) {
            adapters[std::size_t(j)] = LoRAAdapter{core::make_param(Tensor::zeros({M, 2})),
                                                   core::make_param(Tensor::zeros({2, M})), 1.0, 2};
            gates[std::size_t(j)] = GateModule{core::make_param(Tensor::zeros({M, M})),
                                               core::make_param(Tensor::zeros({M}))};
        }
        Tensor f_task_t({N, M}), f_mae_t({N, M});
        const double task_vals[8] = {1, 2, 3, 4, -1, 0, 1, 2};
        const double mae_vals[8] = {0.5, -0.5, 1.0, 0.0, 2.0, 1.0, -1.0, 0.5};
        std::copy(task_vals, task_vals + 8, f_task_t.data.begin());
        std::copy(mae_vals, mae_vals + 8, f_mae_t.data.begin());
        const auto fused = fuse_condition(core::constant(f_task_t), core::constant(f_mae_t), W,
                                          adapters, gates, 1.0);
        // by hand: f_j = f_task + 0.5 * f_mae
        for (std::int64_t i = 0; i < N * M; ++i) {
            const double expect = f_task_t.data[std::size_t(i)] + 0.5 * f_mae_t.data[std::size_t(i)];
            REQUIRE(fused.q->value.data[std::size_t(i)] == doctest::Approx(expect).epsilon(1e-15));
            REQUIRE(fused.k->value.data[std::size_t(i)] == doctest::Approx(expect).epsilon(1e-15));
            REQUIRE(fused.v->value.data[std::size_t(i)] == doctest::Approx(expect).epsilon(1e-15));
        }
    }

    SUBCASE("random small instances match the independent straight-line oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::int64_t N = 3, M = 8, r = 2;
            const Tensor f_task_t = Tensor::randn({N, M}, rng);
            const Tensor f_mae_t = Tensor::randn({N, M}, rng);
            std::array<Var, 3> W = {core::make_param(Tensor::randn({M, M}, rng)),
                                    core::make_param(Tensor::randn({M, M}, rng)),
                                    core::make_param(Tensor::randn({M, M}, rng))};
            std::array<LoRAAdapter, 3> adapters;
            std::array<GateModule, 3> gates;
            for (int j = 0; j < 3; ++j) {
                adapters[std::size_t(j)] =
                    LoRAAdapter{core::make_param(Tensor::randn({M, r}, rng)),
                                core::make_param(Tensor::randn({r, M}, rng)), 0.7, r};
                gates[std::size_t(j)] = GateModule{core::make_param(Tensor::randn({M, M}, rng)),
                                                   core::make_param(Tensor::randn({M}, rng))};
            }
            const auto fused = fuse_condition(core::constant(f_task_t), core::constant(f_mae_t), W,
                                              adapters, gates, 1.0);
            const Var* outs[3] = {&fused.q, &fused.k, &fused.v};
            for (int j = 0; j < 3; ++j) {
                const auto expect = FusionOracle::evaluate_j(
                    f_task_t, f_mae_t, W[std::size_t(j)]->value,
                    adapters[std::size_t(j)].down->value, adapters[std::size_t(j)].up->value, 0.7,
                    gates[std::size_t(j)].w->value, gates[std::size_t(j)].b->value);
                for (std::size_t i = 0; i < expect.size(); ++i)
                    REQUIRE(std::abs((*outs[j])->value.data[i] - expect[i]) < 1e-10);
            }
        }
    }

    SUBCASE("width and token-count mismatches are rejected") {
        InjectionConfig cfg;
        cfg.width = 8;
        cfg.layers = 1;
        cfg.n_task = 2;
        InjectionModules inj(cfg, 35);
        std::array<Var, 3> W = {core::make_param(Tensor::zeros({8, 8})),
                                core::make_param(Tensor::zeros({8, 8})),
                                core::make_param(Tensor::zeros({8, 8}))};
        CHECK_THROWS_AS(fuse_condition(core::constant(Tensor::zeros({2, 8})),
                                       core::constant(Tensor::zeros({2, 4})), W, inj.adapters(0),
                                       inj.gates(0)),
                        std::invalid_argument);
        CHECK_THROWS_AS(fuse_condition(core::constant(Tensor::zeros({2, 8})),
                                       core::constant(Tensor::zeros({3, 8})), W, inj.adapters(0),
                                       inj.gates(0)),
                        std::invalid_argument);
    }
}

TEST_CASE("gate outputs lie strictly inside (0,1)") {
    RngStream rng(41);
    InjectionConfig cfg;
    cfg.width = 8;
    cfg.layers = 1;
    cfg.n_task = 4;
    InjectionModules inj(cfg, 43);
    // randomize gate weights away from the near-closed init; pre-activations
    // stay below the ~37 magnitude where a double sigmoid saturates to 0/1
    for (auto& [name, v] : inj.params().items())
        if (name.find("gate") != std::string::npos)
            for (auto& x : v->value.data) x = rng.uniform(-1.0, 1.0);
    const auto& gate = inj.gates(0)[0];
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor x = Tensor::randn({4, 8}, rng, 2.0);
        const Var g = core::sigmoid(core::add_rowvec(core::matmul(core::constant(x), gate.w), gate.b));
        for (double v : g->value.data) {
            REQUIRE(v > 0.0);
            REQUIRE(v < 1.0);
        }
    }
}

TEST_CASE("lora update rank is bounded by r") {
    RngStream rng(47);
    const std::int64_t M = 16, r = 3;
    const Tensor down = Tensor::randn({M, r}, rng);
    const Tensor up = Tensor::randn({r, M}, rng);
    Eigen::MatrixXd dW(M, M);
    for (std::int64_t i = 0; i < M; ++i)
        for (std::int64_t j = 0; j < M; ++j) {
            double s = 0.0;
            for (std::int64_t k = 0; k < r; ++k)
                s += down.data[std::size_t(i * r + k)] * up.data[std::size_t(k * M + j)];
            dW(i, j) = s;
        }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dW);
    int above = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-10) ++above;
    CHECK(above <= r);
}

TEST_CASE("attach_injection: gate-closed no-op, sequence lengths, freeze, checkpoints") {
    models::MaeConfig mae_cfg;
    mae_cfg.layers = 1;
    models::ToyMae mae(mae_cfg, 51);

    models::DenoiserConfig den_cfg;
    den_cfg.mode = models::CondMode::token_input;
    den_cfg.width = 64;
    den_cfg.layers = 2;
    models::ToyDenoiser backbone(den_cfg, 53);

    models::VaeConfig vae_cfg;
    vae_cfg.base_channels = 8;
    models::ToyVae vae(vae_cfg, 55);

    align::AlignmentConfig acfg;
    acfg.in_width = 64;
    acfg.out_width = 64;
    acfg.blocks = 1;
    align::AlignmentModule alignment(acfg, 57);

    InjectionConfig icfg;
    icfg.width = 64;
    icfg.layers = 2;
    icfg.n_task = 16;  // = N_m for the 64^2 / patch-16 toy
    InjectionModules injection(icfg, 59);

    // latent grid 8, MAE grid 4 -> S = 2
    const PositionalScaling ps{8, 4, 4};
    InjectedModel model = attach_injection(backbone, injection, alignment, ps);

    RngStream rng(61);
    const core::Image img = data::toy_image(63, 0, 64);
    const masks::PatchMask pm75 = [&] {
        masks::Mask none(64, 64, 0);
        RngStream r(1);
        return masks::expand_to_patch_ratio(none, 16, 0.75, r);
    }();
    const models::MAEPrior prior = mae.predict(img, pm75);

    const Tensor z_t = Tensor::randn({4, 8, 8}, rng);
    const Tensor z_masked = Tensor::randn({4, 8, 8}, rng);
    Tensor lm({1, 8, 8});

    SUBCASE("closed gates reproduce the base model within 1e-9") {
        for (int trial = 0; trial < 5; ++trial) {
            const Tensor zt = Tensor::randn({4, 8, 8}, rng);
            const Tensor inj_out = model.predict(zt, z_masked, lm, prior, 300, 0.0);
            const Tensor base_out = model.predict_base(zt, z_masked, lm, 300);
            REQUIRE(core::max_abs_diff(inj_out, base_out) < 1e-9);
        }
    }

    SUBCASE("attention token counts are unchanged by injection") {
        (void)model.predict(z_t, z_masked, lm, prior, 300, 1.0);
        const auto with_inj = backbone.last_attention_lengths();
        (void)model.predict_base(z_t, z_masked, lm, 300);
        const auto without = backbone.last_attention_lengths();
        REQUIRE(with_inj.size() == without.size());
        for (std::size_t i = 0; i < with_inj.size(); ++i) REQUIRE(with_inj[i] == without[i]);
    }

    SUBCASE("hook mismatch raises a configuration error") {
        models::DenoiserConfig cross_cfg = den_cfg;
        cross_cfg.mode = models::CondMode::cross_attention;
        models::ToyDenoiser cross_backbone(cross_cfg, 65);
        CHECK_THROWS_AS(attach_injection(cross_backbone, injection, alignment, ps),
                        ConfigurationError);
    }

    SUBCASE("short fine-tune: backbone hash constant, adapters move, loss decreases") {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "asuka_inject_freeze";
        fs::remove_all(dir);
        core::save_params(dir / "backbone", backbone.params(), "b");
        const std::string backbone_hash = core::checkpoint_hash(dir / "backbone");
        const std::string backbone_file_hash = core::sha256_file(dir / "backbone" / "tensors.bin");

        const auto corpus = data::toy_corpus(67, 10, 64);
        sched::NoiseSchedule schedule{sched::ScheduleFamily::diffusion, 1000};
        InjectTrainOptions opts;
        opts.steps = 200;
        opts.batch = 1;
        opts.lr = 2e-3;
        opts.seed = 69;
        const auto trace =
            train_inject(model, injection, alignment, corpus, {}, mae, vae, schedule, opts);
        REQUIRE(trace.size() == 200);

        core::save_params(dir / "backbone2", backbone.params(), "b");
        CHECK(core::checkpoint_hash(dir / "backbone2") == backbone_hash);
        // separate serialization: injection checkpoint does not touch the backbone file
        core::save_params(dir / "inject", injection.params(), "i");
        CHECK(core::sha256_file(dir / "backbone" / "tensors.bin") == backbone_file_hash);

        double first = 0.0, last = 0.0;
        for (int i = 0; i < 40; ++i) {
            first += trace[std::size_t(i)].loss;
            last += trace[trace.size() - 1 - std::size_t(i)].loss;
        }
        CHECK(last < first);
        fs::remove_all(dir);
    }
}

TEST_CASE("gradients of adapters, gates and task prompt match finite differences") {
    models::DenoiserConfig den_cfg;
    den_cfg.mode = models::CondMode::token_input;
    den_cfg.width = 16;
    den_cfg.layers = 1;
    den_cfg.heads = 2;
    models::ToyDenoiser backbone(den_cfg, 71);
    core::set_store_trainable(backbone.params(), false);

    align::AlignmentConfig acfg;
    acfg.in_width = 8;
    acfg.out_width = 16;
    acfg.blocks = 1;
    acfg.heads = 2;
    acfg.mlp_ratio = 2;
    align::AlignmentModule alignment(acfg, 73);

    InjectionConfig icfg;
    icfg.width = 16;
    icfg.layers = 1;
    icfg.rank = 2;
    icfg.n_task = 4;
    InjectionModules injection(icfg, 75);
    // move gates off the near-closed init so their gradients are informative
    for (auto& [name, v] : injection.params().items())
        if (name.find("gate.b") != std::string::npos) v->value.fill(0.25);

    const PositionalScaling ps{4, 2, 2};
    InjectedModel model = attach_injection(backbone, injection, alignment, ps);

    RngStream rng(77);
    models::MAEPrior prior;
    prior.tokens = Tensor::randn({4, 8}, rng, 0.5);
    prior.rows = prior.cols = 2;
    const Tensor z_t = Tensor::randn({4, 4, 4}, rng);
    const Tensor z_masked = Tensor::randn({4, 4, 4}, rng);
    Tensor lm({1, 4, 4});
    const Tensor target = Tensor::randn({4, 4, 4}, rng);

    core::ParamStore joint;
    for (auto& [name, v] : injection.params().items()) joint.items().emplace_back("inj." + name, v);
    for (auto& [name, v] : alignment.params().items()) joint.items().emplace_back("al." + name, v);

    auto build = [&]() -> Var {
        return core::mse_loss(model.forward(z_t, z_masked, lm, prior, 450), target);
    };
    auto res = testutil::finite_difference_check(joint, build, rng, 1e-5, 10);
    INFO("worst ", res.worst, " rel ", res.max_rel_err);
    CHECK(res.max_rel_err < 1e-4);
}
