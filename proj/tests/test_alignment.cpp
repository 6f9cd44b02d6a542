#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "asuka/align/alignment.hpp"
#include "asuka/core/checkpoint.hpp"
#include "asuka/data/toy_corpus.hpp"
#include "test_util.hpp"

using namespace asuka;
using namespace asuka::align;
using core::RngStream;
using core::Tensor;

TEST_CASE("alignment preserves token count and maps widths") {
    AlignmentConfig cfg;  // 64 -> 128
    AlignmentModule align_mod(cfg, 3);
    CHECK(align_mod.params().param_count() < 5'000'000);

    RngStream rng(5);
    models::MAEPrior prior;
    prior.tokens = Tensor::randn({256, 64}, rng);
    prior.rows = prior.cols = 16;
    prior.patch_size = 16;
    const Tensor c_mae = align_mod.align(prior);
    CHECK(c_mae.dim(0) == 256);
    CHECK(c_mae.dim(1) == 128);

    // arbitrary N is preserved
    models::MAEPrior small;
    small.tokens = Tensor::randn({7, 64}, rng);
    CHECK(align_mod.align(small).dim(0) == 7);

    models::MAEPrior bad;
    bad.tokens = Tensor::randn({16, 32}, rng);
    CHECK_THROWS_AS(align_mod.align(bad), std::invalid_argument);
}

TEST_CASE("zeroed alignment is the zero map") {
    AlignmentConfig cfg;
    cfg.in_width = 8;
    cfg.out_width = 16;
    cfg.blocks = 2;
    AlignmentModule align_mod(cfg, 7);
    for (auto& [name, v] : align_mod.params().items()) v->value.fill(0.0);

    RngStream rng(9);
    models::MAEPrior prior;
    prior.tokens = Tensor::randn({5, 8}, rng);
    const Tensor out = align_mod.align(prior);
    for (double x : out.data) REQUIRE(x == 0.0);
}

TEST_CASE("alignment gradients match finite differences") {
    AlignmentConfig cfg;
    cfg.in_width = 6;
    cfg.out_width = 8;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    RngStream rng(11);
    for (int draw = 0; draw < 3; ++draw) {
        AlignmentModule align_mod(cfg, 100 + std::uint64_t(draw));
        const Tensor tokens = Tensor::randn({4, 6}, rng, 0.7);
        const Tensor target = Tensor::randn({4, 8}, rng);
        auto build = [&]() {
            return core::mse_loss(align_mod.forward(core::constant(tokens)), target);
        };
        auto res = testutil::finite_difference_check(align_mod.params(), build, rng, 1e-5, 24);
        INFO("draw ", draw, " worst ", res.worst, " rel ", res.max_rel_err);
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("p-schedule: endpoints, midpoint, freeze, monotone continuity") {
    CHECK(schedule_p(0) == 1.0);
    CHECK(schedule_p(1000) == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(schedule_p(2000) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(schedule_p(5000) == doctest::Approx(0.1).epsilon(1e-12));

    double prev = 2.0;
    for (std::int64_t s = 0; s <= 4000; ++s) {
        const double p = schedule_p(s);
        REQUIRE(p <= prev + 1e-15);
        REQUIRE(p >= 0.1 - 1e-15);
        REQUIRE(p <= 1.0 + 1e-15);
        // piecewise-linear continuity: adjacent values differ by at most one slope step
        if (s > 0) REQUIRE(prev - p <= 0.9 / 2000.0 + 1e-15);
        prev = p;
    }
}

TEST_CASE("choose_prior honors the schedule") {
    RngStream rng(13);
    models::MAEPrior predicted, reconstructed;
    predicted.tokens = Tensor::full({4, 4}, 1.0);
    predicted.source = models::MAEPrior::Source::predicted;
    reconstructed.tokens = Tensor::full({4, 4}, 2.0);
    reconstructed.source = models::MAEPrior::Source::reconstructed;

    // step 0: always reconstructed
    for (int i = 0; i < 200; ++i) {
        const auto& got = choose_prior(rng, 0, predicted, reconstructed);
        REQUIRE(got.tokens.data[0] == 2.0);
    }

    // frozen region: 10,000 draws at 0.1 within 3 sigma (~0.009)
    int recon_count = 0;
    for (int i = 0; i < 10000; ++i)
        if (choose_prior(rng, 2000, predicted, reconstructed).source ==
            models::MAEPrior::Source::reconstructed)
            ++recon_count;
    CHECK(std::abs(recon_count / 10000.0 - 0.1) < 0.01);

    // degenerate equality: same tokens either way
    models::MAEPrior same_a = predicted, same_b = predicted;
    same_b.source = models::MAEPrior::Source::reconstructed;
    for (int i = 0; i < 50; ++i) {
        const auto& got = choose_prior(rng, 1000, same_a, same_b);
        REQUIRE(core::bit_equal(got.tokens, predicted.tokens));
    }

    models::MAEPrior bad;
    bad.tokens = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(choose_prior(rng, 0, predicted, bad), std::invalid_argument);
}

namespace {
struct ToyStack {
    models::MaeConfig mae_cfg;
    models::DenoiserConfig den_cfg;
    models::VaeConfig vae_cfg;
    std::unique_ptr<models::ToyMae> mae;
    std::unique_ptr<models::ToyDenoiser> generator;
    std::unique_ptr<models::ToyVae> vae;
    std::vector<core::Image> corpus;

    explicit ToyStack(std::uint64_t seed, int denoiser_layers = 2) {
        mae_cfg.layers = 1;
        mae.reset(new models::ToyMae(mae_cfg, seed));
        den_cfg.mode = models::CondMode::cross_attention;
        den_cfg.layers = denoiser_layers;
        den_cfg.width = 64;
        generator.reset(new models::ToyDenoiser(den_cfg, seed + 1));
        vae_cfg.base_channels = 8;
        vae.reset(new models::ToyVae(vae_cfg, seed + 2));
        corpus = data::toy_corpus(seed + 3, 12, 64);
    }
};
}  // namespace

TEST_CASE("train_alignment: no-op at 0 steps, freeze invariant, decreasing loss") {
    ToyStack stack(17);
    AlignmentConfig acfg;
    acfg.in_width = 64;
    acfg.out_width = 64;
    acfg.blocks = 2;
    AlignmentModule align_mod(acfg, 19);
    sched::NoiseSchedule schedule{sched::ScheduleFamily::diffusion, 1000};

    SUBCASE("zero steps leaves parameters untouched") {
        Tensor before = align_mod.params().items()[0].second->value;
        AlignTrainOptions opts;
        opts.steps = 0;
        const auto trace = train_alignment(align_mod, stack.corpus, {}, *stack.mae, *stack.vae,
                                           *stack.generator, schedule, opts);
        CHECK(trace.empty());
        CHECK(core::bit_equal(before, align_mod.params().items()[0].second->value));
    }

    SUBCASE("short run: frozen hashes stable, loss decreases") {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "asuka_align_freeze";
        fs::remove_all(dir);
        core::save_params(dir / "gen", stack.generator->params(), "g");
        core::save_params(dir / "mae", stack.mae->params(), "m");
        const std::string gen_hash = core::checkpoint_hash(dir / "gen");
        const std::string mae_hash = core::checkpoint_hash(dir / "mae");

        AlignTrainOptions opts;
        opts.steps = 300;
        opts.batch = 1;
        opts.lr = 3e-3;
        opts.seed = 23;
        const auto trace = train_alignment(align_mod, stack.corpus, {}, *stack.mae, *stack.vae,
                                           *stack.generator, schedule, opts);
        REQUIRE(trace.size() == 300);

        core::save_params(dir / "gen2", stack.generator->params(), "g");
        core::save_params(dir / "mae2", stack.mae->params(), "m");
        CHECK(core::checkpoint_hash(dir / "gen2") == gen_hash);
        CHECK(core::checkpoint_hash(dir / "mae2") == mae_hash);

        // median of last 10% strictly below median of first 10%
        auto median_of = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        std::vector<double> first, last;
        for (std::size_t i = 0; i < 30; ++i) {
            first.push_back(trace[i].loss);
            last.push_back(trace[trace.size() - 1 - i].loss);
        }
        CHECK(median_of(last) < median_of(first));

        // trace metadata matches the schedule
        CHECK(trace[0].p == 1.0);
        CHECK(trace[0].lr == opts.lr);
        fs::remove_all(dir);
    }
}
