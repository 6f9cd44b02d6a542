#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "asuka/data/toy_corpus.hpp"
#include "asuka/metrics/gradient_edge.hpp"
#include "asuka/metrics/judge.hpp"
#include "asuka/metrics/judge_stub.hpp"
#include "asuka/metrics/scorers.hpp"

using namespace asuka;
using namespace asuka::metrics;
using core::Image;
using core::RngStream;

namespace {
masks::Mask left_half_mask(std::int64_t h, std::int64_t w) {
    masks::Mask m(h, w, 0);
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w / 2; ++c) m.at(r, c) = 1;
    return m;
}
}  // namespace

TEST_CASE("boundary band excludes the deep interior") {
    masks::Mask disc(64, 64, 0);
    for (std::int64_t r = 0; r < 64; ++r)
        for (std::int64_t c = 0; c < 64; ++c)
            if ((r - 32) * (r - 32) + (c - 32) * (c - 32) <= 20 * 20) disc.at(r, c) = 1;
    const BoundaryBand bb = boundary_band(disc, 2);
    // deep interior = erode(mask, w): band and deep interior are disjoint
    const masks::Mask deep = masks::erode(disc, 2);
    for (std::size_t i = 0; i < bb.band.grid.size(); ++i) {
        const bool overlap = bb.band.grid[i] && deep.grid[i];
        REQUIRE_FALSE(overlap);
    }
    CHECK(bb.band.ratio() > 0.0);
}

TEST_CASE("gradient_at_edge: zero on identical images") {
    const Image img = data::toy_image(3, 0, 64);
    masks::Mask m = left_half_mask(64, 64);
    CHECK(gradient_at_edge(img, img, m) == 0.0);
}

TEST_CASE("gradient_at_edge: exact hand-computed 4x4 instance") {
    // gt constant 0.5; pred = gt + 10/255 inside the left-half mask.
    // Band (width 2) covers all 16 pixels. The only nonzero gradient
    // difference is dx at column 1: magnitude 10 on the 0..255 scale, for
    // 4 rows and 3 channels. Mean over 16 px * 3 ch = 120 / 48 = 2.5.
    Image gt(4, 4, 0.5);
    Image pred = gt;
    const masks::Mask m = left_half_mask(4, 4);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 2; ++c)
            for (int ch = 0; ch < 3; ++ch) pred.at(r, c, ch) += 10.0 / 255.0;
    CHECK(gradient_at_edge(pred, gt, m) == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("gradient_at_edge: symmetry, band locality, error paths") {
    RngStream rng(5);
    Image a = data::toy_image(7, 0, 32);
    Image b = data::toy_image(7, 1, 32);
    masks::Mask m(32, 32, 0);
    for (std::int64_t r = 8; r < 24; ++r)
        for (std::int64_t c = 8; c < 24; ++c) m.at(r, c) = 1;

    const double ab = gradient_at_edge(a, b, m);
    const double ba = gradient_at_edge(b, a, m);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab >= 0.0);

    // perturbations strictly in the deep interior leave the metric unchanged
    const masks::Mask deep = masks::erode(m, 2 + 1);
    REQUIRE(deep.ratio() > 0.0);
    Image a_perturbed = a;
    for (std::int64_t r = 0; r < 32; ++r)
        for (std::int64_t c = 0; c < 32; ++c)
            if (deep.at(r, c))
                for (int ch = 0; ch < 3; ++ch)
                    a_perturbed.at(r, c, ch) = rng.uniform();
    CHECK(gradient_at_edge(a_perturbed, b, m) == doctest::Approx(ab).epsilon(1e-12));

    // empty band
    masks::Mask zero(32, 32, 0);
    masks::Mask ones(32, 32, 1);
    CHECK_THROWS_AS(gradient_at_edge(a, b, zero), UndefinedMetricError);
    CHECK_THROWS_AS(gradient_at_edge(a, b, ones), UndefinedMetricError);

    Image wrong(16, 16, 0.0);
    CHECK_THROWS_AS(gradient_at_edge(wrong, b, m), std::invalid_argument);
}

TEST_CASE("judge composite: geometry and overlay algebra") {
    const Image input = data::toy_image(11, 0, 32);
    const Image result = data::toy_image(11, 1, 32);
    masks::Mask m = left_half_mask(32, 32);

    SUBCASE("alpha 0 leaves the left panel untouched") {
        const Image comp = make_judge_composite(input, m, result, 0.0, 16);
        CHECK(comp.width == 2 * 32 + 16);
        for (std::int64_t r = 0; r < 32; ++r)
            for (std::int64_t c = 0; c < 32; ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    REQUIRE(comp.at(r, c, ch) == input.at(r, c, ch));
                    REQUIRE(comp.at(r, 32 + 16 + c, ch) == result.at(r, c, ch));
                }
        // the gap stays white
        for (std::int64_t r = 0; r < 32; ++r)
            for (std::int64_t c = 32; c < 48; ++c)
                for (int ch = 0; ch < 3; ++ch) REQUIRE(comp.at(r, c, ch) == 1.0);
    }

    SUBCASE("alpha 1 inside an all-ones mask paints the flat overlay") {
        masks::Mask all(32, 32, 1);
        const Image comp = make_judge_composite(input, all, result, 1.0, 4);
        for (std::int64_t r = 0; r < 32; ++r)
            for (std::int64_t c = 0; c < 32; ++c)
                for (int ch = 0; ch < 3; ++ch) REQUIRE(comp.at(r, c, ch) == 0.5);
    }

    SUBCASE("output width arithmetic and determinism") {
        const Image c512 = Image(8, 512, 0.3);
        masks::Mask m512 = left_half_mask(8, 512);
        const Image comp = make_judge_composite(c512, m512, c512, 0.5, 16);
        CHECK(comp.width == 1040);
        const Image comp2 = make_judge_composite(c512, m512, c512, 0.5, 16);
        CHECK(comp.data == comp2.data);
    }

    SUBCASE("dimension mismatch raises") {
        const Image small(16, 16, 0.0);
        CHECK_THROWS_AS(make_judge_composite(input, m, small, 0.5, 16), std::invalid_argument);
    }
}

TEST_CASE("verdict parsing honors the constrained final token") {
    CHECK(parse_verdict("blah\nANSWER: YES") == true);
    CHECK(parse_verdict("blah\nanswer: no") == false);
    CHECK(parse_verdict("ANSWER: YES\n...later...\nANSWER: NO") == false);
    CHECK_FALSE(parse_verdict("no verdict here").has_value());
    CHECK_FALSE(parse_verdict("ANSWER: MAYBE").has_value());
}

TEST_CASE("judge client against the stub server") {
    StubJudgeServer stub;
    const int port = stub.start();
    REQUIRE(port > 0);

    JudgeClientConfig cfg;
    cfg.base_url = stub.base_url();
    cfg.model_id = "stub-judge";
    cfg.timeout_ms = 5000;
    const JudgeClient client(cfg);

    const Image composite = data::toy_image(13, 0, 16);

    SUBCASE("fixed yes and no replies round-trip") {
        stub.set_fixed_reply("The region contains an inserted object.\nANSWER: YES");
        const auto v1 = client.judge_hallucination(composite, kDefaultJudgePrompt);
        CHECK(v1.hallucination == true);
        CHECK(v1.model_id == "stub-judge");

        stub.set_fixed_reply("Looks clean.\nANSWER: NO");
        const auto v2 = client.judge_hallucination(composite, kDefaultJudgePrompt);
        CHECK(v2.hallucination == false);
    }

    SUBCASE("free text without a verdict raises a protocol error with raw text") {
        stub.set_fixed_reply("a rambling reply with no verdict token");
        try {
            (void)client.judge_hallucination(composite, kDefaultJudgePrompt);
            FAIL("expected ProtocolError");
        } catch (const ProtocolError& e) {
            CHECK(e.raw_response == "a rambling reply with no verdict token");
        }
    }

    SUBCASE("transient failures are retried") {
        stub.set_fixed_reply("ANSWER: NO");
        stub.reset_counter();
        stub.set_fail_first(2);
        const auto v = client.judge_hallucination(composite, kDefaultJudgePrompt);
        CHECK(v.hallucination == false);
        CHECK(stub.requests_seen() == 3);
        stub.set_fail_first(0);
    }

    SUBCASE("exhausted retries raise a transport error") {
        stub.set_fixed_reply("ANSWER: NO");
        stub.reset_counter();
        stub.set_fail_first(100);
        CHECK_THROWS_AS((void)client.judge_hallucination(composite, kDefaultJudgePrompt),
                        TransportError);
        stub.set_fail_first(0);
    }

    SUBCASE("batch with bounded in-flight window resolves every item") {
        // image-keyed scripted replies: expected verdict is computable per item
        const int n = 40;
        std::vector<std::pair<std::string, Image>> items;
        for (int i = 0; i < n; ++i)
            items.emplace_back("item" + std::to_string(i), data::toy_image(17, i, 16));
        const auto results = client.judge_batch(items, kDefaultJudgePrompt);
        REQUIRE(results.size() == std::size_t(n));
        int verdicts = 0, protocol_errors = 0;
        for (int i = 0; i < n; ++i) {
            const auto& r = results[std::size_t(i)];
            CHECK(r.id == "item" + std::to_string(i));
            // recompute the stub's deterministic reply for this image
            const std::string url =
                "data:image/png;base64," +
                base64_encode(core::encode_png_rgb(items[std::size_t(i)].second));
            const std::string expected_reply = stub_reply_for_image(url);
            const auto expected = parse_verdict(expected_reply);
            if (expected.has_value()) {
                REQUIRE(r.verdict.has_value());
                REQUIRE(r.verdict->hallucination == *expected);
                ++verdicts;
            } else {
                REQUIRE_FALSE(r.verdict.has_value());
                REQUIRE(r.error.find("protocol") == 0);
                ++protocol_errors;
            }
        }
        CHECK(verdicts + protocol_errors == n);
        CHECK(verdicts > 0);
        CHECK(protocol_errors > 0);
    }

    stub.stop();
}

TEST_CASE("judge results persist one record per item") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "asuka_judge_io";
    fs::create_directories(dir);
    std::vector<JudgeClient::ItemResult> results(2);
    results[0].id = "a";
    results[0].verdict = JudgeVerdict{true, "ANSWER: YES", "m"};
    results[0].latency_ms = 12;
    results[1].id = "b";
    results[1].error = "transport: nope";
    save_judge_results(dir / "verdicts.jsonl", results);
    std::ifstream in(dir / "verdicts.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 2);
    fs::remove_all(dir);
}

TEST_CASE("scorer registry: unavailable markers, plugins, crash wrapping") {
    std::vector<EvalRecord> records;
    for (int i = 0; i < 3; ++i) {
        EvalRecord r;
        r.pred = data::toy_image(19, i, 32);
        r.gt = data::toy_image(23, i, 32);
        r.mask = left_half_mask(32, 32);
        records.push_back(std::move(r));
    }

    SUBCASE("no plugins: G@e present, external metrics unavailable") {
        ScorerRegistry reg;
        const auto scores = reg.score_with_plugins(records);
        REQUIRE(scores.count("gradient_at_edge") == 1);
        CHECK(scores.at("gradient_at_edge").available);
        for (const auto& name : ScorerRegistry::known_external_metrics()) {
            REQUIRE(scores.count(name) == 1);
            CHECK_FALSE(scores.at(name).available);
        }
    }

    SUBCASE("identity plugin contributes its named value") {
        ScorerRegistry reg;
        reg.register_scorer("test", [](const std::vector<EvalRecord>&) {
            return std::map<std::string, double>{{"test", 1.0}};
        });
        const auto scores = reg.score_with_plugins(records);
        REQUIRE(scores.count("test") == 1);
        CHECK(scores.at("test").available);
        CHECK(scores.at("test").value == 1.0);
        CHECK(scores.at("gradient_at_edge").available);  // built-in still present
    }

    SUBCASE("plugin crash is wrapped") {
        ScorerRegistry reg;
        reg.register_scorer("boom", [](const std::vector<EvalRecord>&) -> std::map<std::string, double> {
            throw std::runtime_error("kaput");
        });
        CHECK_THROWS_AS((void)reg.score_with_plugins(records), PluginError);
    }
}
