#include "doctest.h"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltw/pipeline.hpp"
#include "ltw/rng.hpp"

using namespace ltw;

namespace {

// small looping corpus with a mix of predictable and open contexts
const char* kToyCorpus =
    "the cat sat on the mat and the dog ran over the hill\n"
    "the dog ran over the hill and the cat sat on the mat\n"
    "a bird flew over the hill while the cat slept on the mat\n"
    "the cat chased the bird and the dog chased the cat\n"
    "a dog slept on the mat while a bird sat on the hill\n"
    "the bird flew while the dog ran and the cat slept\n"
    "a cat ran over the mat and a dog sat on the hill\n"
    "the mat lay on the hill while the bird chased the dog\n";

TokenModel toy_model() { return fit_ngram_text(kToyCorpus, 2, 0.1, 64); }

struct Rig {
    TokenModel model = toy_model();
    SelectorParams selector = selector_init(64, 32, 8, 8, 2024);
    ThresholdPolicy policy;
    HashScheme scheme = HashScheme::context_hash(15485863);
    SamplerConfig sampler;
    double gamma = 0.25;
    double delta = 3.0;

    std::vector<TokenId> prompt() const { return model.ids_of({"the", "cat"}); }
};

} // namespace

TEST_CASE("z_score fixtures and validation") {
    CHECK(z_score(25, 100, 0.25) == 0.0);
    CHECK(z_score(48, 48, 0.25) == doctest::Approx(12.0).epsilon(1e-15));
    CHECK(z_score(30, 100, 0.25) == doctest::Approx(1.1547005383792515).epsilon(1e-15));
    CHECK_THROWS_AS(z_score(0, 0, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(z_score(5, 4, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(z_score(1, 4, 0.0), std::invalid_argument);
}

TEST_CASE("z degradation worked pair and dilution property") {
    auto [z_orig, z_new] = z_degradation_check(48, 48, 0.25, 1);
    CHECK(z_orig == doctest::Approx(12.0).epsilon(1e-15));
    CHECK(std::abs(z_new - 11.876919823329445) <= 1e-12);

    SplitMix64 rng(31337);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n_scored = 1 + rng.bounded(400);
        const std::size_t n_green = rng.bounded(n_scored + 1);
        const double gamma = 0.05 + 0.9 * rng.next_double();
        const std::size_t extra = 1 + rng.bounded(100);
        auto [zo, zn] = z_degradation_check(n_green, n_scored, gamma, extra);
        if (zo > 0.0) {
            CHECK(zn < zo);
        } else if (zo == 0.0) {
            CHECK(zn == 0.0);
        }
    }
    CHECK_THROWS_AS(z_degradation_check(10, 20, 0.25, 0), std::invalid_argument);
}

TEST_CASE("delta 0 generation matches the unwatermarked stream") {
    Rig rig;
    auto prompt = rig.prompt();
    SplitMix64 rng_a(7), rng_b(7);
    auto wm = generate_watermarked(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma,
                                   0.0, rig.sampler, prompt, 40, rng_a);
    auto off = generate_with_rule(rig.model, SelectionRule::always_off(), nullptr, rig.policy,
                                  rig.scheme, rig.gamma, 0.0, rig.sampler, prompt, 40, rng_b);
    CHECK(wm.output == off.output);
}

TEST_CASE("unreachable thresholds produce an all-zero mask and neutral output") {
    Rig rig;
    rig.policy.tau_low = rig.policy.tau_mid = rig.policy.tau_high = 1.0;
    auto prompt = rig.prompt();
    SplitMix64 rng_a(9), rng_b(9);
    auto gated = generate_watermarked(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma,
                                      rig.delta, rig.sampler, prompt, 40, rng_a);
    auto off = generate_with_rule(rig.model, SelectionRule::always_off(), nullptr, rig.policy,
                                  rig.scheme, rig.gamma, rig.delta, rig.sampler, prompt, 40,
                                  rng_b);
    for (int bit : gated.mask) CHECK(bit == 0);
    CHECK(gated.output == off.output);
}

TEST_CASE("record invariants hold for generation") {
    Rig rig;
    auto prompt = rig.prompt();
    SplitMix64 rng(12);
    auto rec = generate_watermarked(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma,
                                    rig.delta, rig.sampler, prompt, 60, rng);
    CHECK(rec.output.size() >= 1);
    CHECK(rec.output.size() <= 60);
    CHECK(rec.mask.size() == rec.output.size());
    CHECK(rec.per_step.size() == rec.output.size());
    if (rec.output.size() < 60) CHECK(rec.output.back() == TokenModel::kEos);
    for (const auto& s : rec.per_step) {
        CHECK(s.entropy >= 0.0);
        CHECK(s.m_soft > 0.0);
        CHECK(s.m_soft < 1.0);
    }
}

TEST_CASE("detection reproduces the injection mask and z across schemes and seeds") {
    Rig rig;
    for (const auto scheme :
         {HashScheme::context_hash(15485863), HashScheme::fixed_key(15485863)}) {
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 70ULL, 71ULL}) {
            SplitMix64 rng(seed);
            auto prompt = rig.prompt();
            auto rec = generate_watermarked(rig.model, rig.selector, rig.policy, scheme,
                                            rig.gamma, rig.delta, rig.sampler, prompt, 60, rng);
            std::vector<TokenId> full = rec.prompt;
            full.insert(full.end(), rec.output.begin(), rec.output.end());
            auto det = detect(rig.model, rig.selector, rig.policy, scheme, rig.gamma, full,
                              rec.prompt.size());

            std::vector<std::size_t> want;
            for (std::size_t i = 0; i < rec.mask.size(); ++i) {
                if (rec.mask[i]) want.push_back(rec.prompt.size() + i);
            }
            CHECK(det.selected_positions == want);

            auto audit = audit_score(rec, rig.gamma);
            CHECK(det.n_scored == audit.n_scored);
            CHECK(det.n_green == audit.n_green);
            if (audit.detectable()) {
                CHECK(det.z == audit.z);
            } else {
                CHECK(std::isnan(det.z));
            }
        }
    }
}

TEST_CASE("always-on rule scores every token and a strong bias skews green") {
    Rig rig;
    auto prompt = rig.prompt();
    double z_sum = 0.0;
    int n = 0;
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL, 14ULL, 15ULL}) {
        SplitMix64 rng(seed);
        auto rec = generate_with_rule(rig.model, SelectionRule::always_on(), nullptr, rig.policy,
                                      rig.scheme, rig.gamma, 10.0, rig.sampler, prompt, 80, rng);
        std::vector<TokenId> full = rec.prompt;
        full.insert(full.end(), rec.output.begin(), rec.output.end());
        auto det = detect_with_rule(rig.model, SelectionRule::always_on(), nullptr, rig.policy,
                                    rig.scheme, rig.gamma, full, rec.prompt.size());
        CHECK(det.n_scored == rec.output.size());
        REQUIRE(det.detectable());
        z_sum += det.z;
        ++n;
    }
    CHECK(z_sum / n > 4.0);
}

TEST_CASE("entropy-threshold rule gates on entropy") {
    Rig rig;
    auto prompt = rig.prompt();
    SplitMix64 rng(21);
    auto rec = generate_with_rule(rig.model, SelectionRule::entropy_gate(1e9), nullptr,
                                  rig.policy, rig.scheme, rig.gamma, rig.delta, rig.sampler,
                                  prompt, 40, rng);
    for (int bit : rec.mask) CHECK(bit == 0);
    std::vector<TokenId> full = rec.prompt;
    full.insert(full.end(), rec.output.begin(), rec.output.end());
    auto det = detect_with_rule(rig.model, SelectionRule::entropy_gate(1e9), nullptr, rig.policy,
                                rig.scheme, rig.gamma, full, rec.prompt.size());
    CHECK(det.n_scored == 0);
    CHECK_FALSE(det.detectable());
    CHECK(std::isnan(det.z));

    SplitMix64 rng2(21);
    auto all = generate_with_rule(rig.model, SelectionRule::entropy_gate(0.0), nullptr,
                                  rig.policy, rig.scheme, rig.gamma, rig.delta, rig.sampler,
                                  prompt, 40, rng2);
    for (int bit : all.mask) CHECK(bit == 1);
}

TEST_CASE("detect validates its span") {
    Rig rig;
    std::vector<TokenId> ids = rig.model.ids_of({"the", "cat", "sat"});
    CHECK_THROWS_AS(
        detect(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma, ids, ids.size()),
        std::invalid_argument);
    CHECK_THROWS_AS(detect(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma, ids, 0),
                    std::invalid_argument);
    std::vector<TokenId> bad{0, 1, 9999};
    CHECK_THROWS_AS(detect(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma, bad, 1),
                    std::invalid_argument);
}

TEST_CASE("generation record serialization round-trips") {
    Rig rig;
    SplitMix64 rng(33);
    auto prompt = rig.prompt();
    auto rec = generate_watermarked(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma,
                                    rig.delta, rig.sampler, prompt, 50, rng);
    auto text = rec.to_text();
    auto back = GenerationRecord::from_text(text);
    CHECK(back.prompt == rec.prompt);
    CHECK(back.output == rec.output);
    CHECK(back.mask == rec.mask);
    CHECK(back.fallback_count == rec.fallback_count);
    REQUIRE(back.per_step.size() == rec.per_step.size());
    for (std::size_t i = 0; i < rec.per_step.size(); ++i) {
        CHECK(back.per_step[i].entropy == rec.per_step[i].entropy);
        CHECK(back.per_step[i].m_soft == rec.per_step[i].m_soft);
        CHECK(back.per_step[i].tau == rec.per_step[i].tau);
        CHECK(back.per_step[i].green_hit == rec.per_step[i].green_hit);
    }
    CHECK(back.to_text() == text);

    CHECK_THROWS_AS(GenerationRecord::from_text("nope"), std::runtime_error);
    CHECK_THROWS_AS(GenerationRecord::from_text(text.substr(0, text.size() / 2)),
                    std::runtime_error);
}

TEST_CASE("golden generation fixture is stable") {
    // frozen from the first verified build of this configuration; any change
    // here means the generation path changed behaviour
    Rig rig;
    auto prompt = rig.prompt();
    SplitMix64 rng(1234);
    auto rec = generate_watermarked(rig.model, rig.selector, rig.policy, rig.scheme, rig.gamma,
                                    rig.delta, rig.sampler, prompt, 30, rng);
    CHECK(rec.output == std::vector<TokenId>{14, 6, 3, 7, 15, 3, 5, 7, 6, 15, 1});
    CHECK(rec.mask == std::vector<int>{1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0});
    CHECK(rec.fallback_count == 0);
    auto audit = audit_score(rec, rig.gamma);
    CHECK(audit.n_scored == 4);
    CHECK(audit.n_green == 4);
    CHECK(audit.z == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("unwatermarked text scores near zero on average") {
    Rig rig;
    auto prompt = rig.prompt();
    double abs_z_sum = 0.0;
    int n = 0;
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        SplitMix64 rng(seed);
        auto rec = generate_with_rule(rig.model, SelectionRule::always_off(), nullptr, rig.policy,
                                      rig.scheme, rig.gamma, 0.0, rig.sampler, prompt, 60, rng);
        std::vector<TokenId> full = rec.prompt;
        full.insert(full.end(), rec.output.begin(), rec.output.end());
        if (full.size() <= prompt.size() + 5) continue;
        auto det = detect_with_rule(rig.model, SelectionRule::always_on(), nullptr, rig.policy,
                                    rig.scheme, rig.gamma, full, prompt.size());
        REQUIRE(det.detectable());
        abs_z_sum += std::abs(det.z);
        ++n;
    }
    REQUIRE(n >= 20);
    CHECK(abs_z_sum / n <= 1.5);
}
