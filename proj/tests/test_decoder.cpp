#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "asuka/core/checkpoint.hpp"
#include "asuka/data/toy_corpus.hpp"
#include "asuka/decoder/harmonize.hpp"
#include "asuka/metrics/gradient_edge.hpp"

using namespace asuka;
using namespace asuka::decoder;
using core::Image;
using core::RngStream;
using core::Tensor;

TEST_CASE("build_training_pair: degenerate autoencoding, color determinism, latent cache") {
    models::VaeConfig vcfg;
    vcfg.base_channels = 8;
    models::ToyVae vae(vcfg, 5);
    const Image img = data::toy_image(7, 0, 64);
    sched::ColorJitterParams jitter;

    SUBCASE("aug none with zero mask degenerates to plain autoencoding") {
        masks::Mask none(64, 64, 0);
        RngStream rng(9);
        const TrainingPair pair = build_training_pair(img, none, rng, AugKind::none, vae, jitter);
        CHECK(core::bit_equal(pair.corrupt_latent, vae.encode(img)));
        CHECK(pair.cond_masked_image.data == img.data);  // full conditioning
        CHECK(pair.target.data == img.data);
    }

    SUBCASE("color augmentation is the seeded jitter of the clean image") {
        masks::Mask none(64, 64, 0);
        RngStream r1(11), r2(11);
        const TrainingPair pair = build_training_pair(img, none, r1, AugKind::color, vae, jitter);
        const Image expected_input = sched::color_jitter(img, r2, jitter);
        CHECK(core::bit_equal(pair.corrupt_latent, vae.encode(expected_input)));
    }

    SUBCASE("latent augmentation requires the cached estimate") {
        masks::Mask none(64, 64, 0);
        RngStream rng(13);
        CHECK_THROWS_AS(build_training_pair(img, none, rng, AugKind::latent, vae, jitter, nullptr),
                        std::invalid_argument);
        const Image cached = data::toy_image(7, 1, 64);
        const TrainingPair pair =
            build_training_pair(img, none, rng, AugKind::latent, vae, jitter, &cached);
        CHECK(core::bit_equal(pair.corrupt_latent, vae.encode(cached)));
    }

    SUBCASE("conditioning image is original masked by (1-mask)") {
        masks::Mask half(64, 64, 0);
        for (std::int64_t r = 0; r < 64; ++r)
            for (std::int64_t c = 0; c < 32; ++c) half.at(r, c) = 1;
        RngStream rng(15);
        const TrainingPair pair = build_training_pair(img, half, rng, AugKind::none, vae, jitter);
        for (std::int64_t r = 0; r < 64; ++r)
            for (std::int64_t c = 0; c < 64; ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    const double expect = c < 32 ? 0.0 : img.at(r, c, ch);
                    REQUIRE(pair.cond_masked_image.at(r, c, ch) == expect);
                }
    }
}

TEST_CASE("pair builder: jagged mask mixing rate") {
    RngStream rng(17);
    models::VaeConfig vcfg;
    vcfg.base_channels = 8;
    models::ToyVae vae(vcfg, 19);
    const auto corpus = data::toy_corpus(21, 4, 64);
    PairBuilder::Options opts;
    PairBuilder builder(corpus, {}, {}, vae, opts);

    const int n = 10000;
    int jagged = 0;
    for (int i = 0; i < n; ++i) {
        bool j = false;
        (void)builder.sample_pair_mask(64, 64, rng, &j);
        if (j) ++jagged;
    }
    CHECK(std::abs(jagged / double(n) - 0.25) < 0.02);
}

TEST_CASE("composite: identities, hand-checkable piecewise output, idempotence") {
    Image decoded(4, 4, 0.25);
    Image original(4, 4, 0.75);

    masks::Mask zero(4, 4, 0);
    CHECK(composite(decoded, original, zero).data == original.data);

    masks::Mask ones(4, 4, 1);
    CHECK(composite(decoded, original, ones).data == decoded.data);

    // half-plane on distinct constants: exact piecewise-constant output
    masks::Mask half(4, 4, 0);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 2; ++c) half.at(r, c) = 1;
    const Image piecewise = composite(decoded, original, half);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 4; ++c)
            for (int ch = 0; ch < 3; ++ch)
                REQUIRE(piecewise.at(r, c, ch) == (c < 2 ? 0.25 : 0.75));

    // idempotence and bit-exact unmasked pixels
    const Image twice = composite(composite(decoded, original, half), original, half);
    CHECK(twice.data == piecewise.data);

    Image bad(5, 4, 0.0);
    CHECK_THROWS_AS(composite(bad, original, half), std::invalid_argument);
}

TEST_CASE("decoder training: freeze, loss decrease, G@e direction on the color-shift set") {
    models::VaeConfig vcfg;
    vcfg.base_channels = 8;
    models::ToyVae vae(vcfg, 23);
    const auto corpus = data::toy_corpus(25, 16, 64);

    // stage A: plain autoencoder pretraining
    VaePretrainOptions pre;
    pre.steps = 500;
    pre.batch = 2;
    pre.lr = 2e-3;
    pre.seed = 27;
    const auto pre_trace = pretrain_vae(vae, corpus, pre);
    REQUIRE(pre_trace.size() == 500);
    double pre_first = 0.0, pre_last = 0.0;
    for (int i = 0; i < 50; ++i) {
        pre_first += pre_trace[std::size_t(i)].loss;
        pre_last += pre_trace[pre_trace.size() - 1 - std::size_t(i)].loss;
    }
    CHECK(pre_last < pre_first);

    // baseline decoder = stage-A decoder, used unconditioned
    models::ToyVae baseline(vcfg, 999);
    {
        namespace fs = std::filesystem;
        const fs::path tmp = fs::temp_directory_path() / "asuka_dec_copy";
        fs::remove_all(tmp);
        core::save_params(tmp / "enc", vae.encoder_params(), "x");
        core::save_params(tmp / "dec", vae.decoder_params(), "x");
        core::load_params(tmp / "enc", baseline.encoder_params());
        core::load_params(tmp / "dec", baseline.decoder_params());
        fs::remove_all(tmp);
    }

    // stage B: harmonization fine-tune, encoder frozen
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "asuka_dec_freeze";
    fs::remove_all(dir);
    core::save_params(dir / "enc", vae.encoder_params(), "e");
    const std::string enc_hash = core::checkpoint_hash(dir / "enc");

    PairBuilder::Options popts;
    PairBuilder builder(corpus, {}, {}, vae, popts);
    DecoderTrainOptions opts;
    opts.steps = 500;
    opts.batch = 2;
    opts.lr = 1e-3;
    opts.seed = 29;
    const auto trace = train_decoder(vae, builder, opts);
    REQUIRE(trace.size() == 500);

    core::save_params(dir / "enc2", vae.encoder_params(), "e");
    CHECK(core::checkpoint_hash(dir / "enc2") == enc_hash);
    fs::remove_all(dir);

    double ft_first = 0.0, ft_last = 0.0;
    for (int i = 0; i < 50; ++i) {
        ft_first += trace[std::size_t(i)].loss;
        ft_last += trace[trace.size() - 1 - std::size_t(i)].loss;
    }
    CHECK(ft_last < ft_first);

    // paired G@e: trained conditional decoder vs unconditioned baseline
    sched::ColorJitterParams jitter;
    const auto eval_set = build_color_shift_eval_set(31, 24, 64, jitter, {});
    const double gae_trained = mean_gae_over(
        eval_set, vae,
        [&](const Tensor& z, const Image& cond, const masks::Mask& m) {
            return vae.decode_cond(z, cond, m);
        });
    const double gae_baseline = mean_gae_over(
        eval_set, vae,
        [&](const Tensor& z, const Image&, const masks::Mask&) {
            return baseline.decode_uncond(z);
        });
    INFO("trained ", gae_trained, " baseline ", gae_baseline);
    CHECK(gae_trained < gae_baseline);
}

TEST_CASE("train_decoder with zero steps leaves the decoder unchanged") {
    models::VaeConfig vcfg;
    vcfg.base_channels = 8;
    models::ToyVae vae(vcfg, 33);
    const auto corpus = data::toy_corpus(35, 4, 64);
    PairBuilder builder(corpus, {}, {}, vae, {});
    const Tensor before = vae.decoder_params().items()[0].second->value;
    DecoderTrainOptions opts;
    opts.steps = 0;
    const auto trace = train_decoder(vae, builder, opts);
    CHECK(trace.empty());
    CHECK(core::bit_equal(before, vae.decoder_params().items()[0].second->value));
}
