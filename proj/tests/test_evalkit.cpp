#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ltw/evalkit.hpp"
#include "ltw/rng.hpp"

using namespace ltw;

namespace {

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

}  // namespace

TEST_CASE("auroc fixtures") {
    CHECK(auroc({{3.0, 4.0, 5.0}, {0.0, 1.0, 2.0}}) == 1.0);
    CHECK(auroc({{1.0, 1.0}, {1.0, 1.0}}) == 0.5);
    CHECK(auroc({{2.0, 3.0}, {1.0, 2.0}}) == doctest::Approx(0.875).epsilon(1e-15));
    CHECK(auroc({{0.0}, {1.0}}) == 0.0);

    CHECK_THROWS_AS(auroc({{}, {1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({{1.0}, {}}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({{std::nan("")}, {1.0}}), std::invalid_argument);
}

TEST_CASE("auroc is invariant under strictly monotone transforms") {
    SplitMix64 rng(41);
    ScorePair raw;
    for (int i = 0; i < 40; ++i) raw.positives.push_back(rng.next_double() * 6.0 - 1.0);
    for (int i = 0; i < 60; ++i) raw.negatives.push_back(rng.next_double() * 4.0 - 2.0);
    const double base = auroc(raw);

    auto apply = [&](auto f) {
        ScorePair t = raw;
        for (auto& v : t.positives) v = f(v);
        for (auto& v : t.negatives) v = f(v);
        return auroc(t);
    };
    CHECK(apply([](double x) { return 2.0 * x + 1.0; }) == base);
    CHECK(apply([](double x) { return std::atan(x); }) == base);
    CHECK(apply([](double x) { return x * x * x + 2.0 * x; }) == base);
}

TEST_CASE("best f1 fixtures") {
    CHECK(best_f1({{3.0, 4.0}, {1.0, 2.0}}) == 1.0);
    CHECK(best_f1({{1.0}, {1.0}}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(best_f1({{3.0, 4.0, 5.0}, {0.0, 1.0, 2.0}}) == 1.0);
    // hopeless overlap still scores the all-positive threshold
    CHECK(best_f1({{1.0, 1.0}, {1.0, 1.0}}) ==
          doctest::Approx(2.0 * 2.0 / (2.0 + 2.0 + 2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(best_f1({{}, {1.0}}), std::invalid_argument);
}

TEST_CASE("tpr at fpr fixtures and monotonicity") {
    CHECK(tpr_at_fpr({{3.0, 4.0}, {1.0, 2.0}}, 0.0) == 1.0);
    CHECK(tpr_at_fpr({{3.0, 4.0, 5.0}, {0.0, 1.0, 2.0}}, 1.0 / 3.0) == 1.0);
    // inseparable at fpr 0: no threshold clears every negative
    CHECK(tpr_at_fpr({{1.0}, {2.0}}, 0.0) == 0.0);

    SplitMix64 rng(42);
    ScorePair same;
    for (int i = 0; i < 200; ++i) {
        const double v = rng.next_double();
        same.positives.push_back(v);
        same.negatives.push_back(v);
    }
    for (double fpr : {0.05, 0.1, 0.25, 0.5}) {
        const double tpr = tpr_at_fpr(same, fpr);
        CHECK(tpr <= fpr);
        CHECK(tpr >= fpr - 1.0 / 200.0);
    }

    ScorePair noisy;
    for (int i = 0; i < 150; ++i) noisy.positives.push_back(rng.next_double() * 3.0);
    for (int i = 0; i < 150; ++i) noisy.negatives.push_back(rng.next_double() * 2.0);
    double prev = -1.0;
    for (double fpr = 0.0; fpr < 1.0; fpr += 0.05) {
        const double tpr = tpr_at_fpr(noisy, fpr);
        CHECK(tpr >= prev);
        prev = tpr;
    }

    CHECK_THROWS_AS(tpr_at_fpr({{1.0}, {1.0}}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(tpr_at_fpr({{1.0}, {1.0}}, -0.1), std::invalid_argument);
}

TEST_CASE("substitution attack identity, determinism and golden sequence") {
    auto model = toy_model();
    std::vector<TokenId> tokens;
    for (int i = 0; i < 100; ++i) tokens.push_back(static_cast<TokenId>(3 + (i * 7) % 17));

    SplitMix64 rng0(1);
    CHECK(substitution_attack(tokens, 0.0, model, rng0) == tokens);

    SplitMix64 rng_a(20240816), rng_b(20240816);
    auto out_a = substitution_attack(tokens, 0.2, model, rng_a);
    auto out_b = substitution_attack(tokens, 0.2, model, rng_b);
    CHECK(out_a == out_b);

    const std::vector<TokenId> golden{
        3,  10, 17, 7,  3,  4,  8,  18, 8,  15, 5,  12, 19, 9,  16, 6,  13, 3,  10, 17,
        7,  14, 4,  11, 18, 8,  15, 5,  12, 19, 9,  16, 6,  13, 3,  10, 17, 8,  14, 4,
        11, 18, 7,  15, 5,  12, 9,  9,  16, 11, 3,  3,  10, 9,  7,  14, 4,  3,  18, 3,
        15, 5,  12, 3,  9,  16, 12, 3,  3,  10, 3,  7,  14, 4,  11, 18, 8,  15, 5,  12,
        7,  9,  16, 3,  5,  12, 10, 17, 4,  14, 4,  3,  18, 8,  15, 5,  12, 19, 9,  16};
    CHECK(out_a == golden);

    std::size_t changed = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (out_a[i] != tokens[i]) {
            ++changed;
            CHECK(out_a[i] >= 0);
            CHECK(static_cast<std::size_t>(out_a[i]) < model.vocab_size());
        }
    }
    CHECK(changed == 20);

    SplitMix64 rng_bad(1);
    CHECK_THROWS_AS(substitution_attack(tokens, 1.0, model, rng_bad), std::invalid_argument);
    CHECK_THROWS_AS(substitution_attack(tokens, -0.1, model, rng_bad), std::invalid_argument);
    std::vector<TokenId> bad{static_cast<TokenId>(model.vocab_size())};
    CHECK_THROWS_AS(substitution_attack(bad, 0.5, model, rng_bad), std::invalid_argument);
}

TEST_CASE("substitution attack changes about rate * len positions") {
    auto model = toy_model();
    std::vector<TokenId> tokens(2000);
    SplitMix64 fill(9);
    for (auto& t : tokens) {
        t = static_cast<TokenId>(fill.bounded(static_cast<std::uint64_t>(model.vocab_size())));
    }
    const double rate = 0.2;
    SplitMix64 rng(77);
    auto out = substitution_attack(tokens, rate, model, rng);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (out[i] != tokens[i]) ++changed;
    }
    // 5 sigma around the binomial mean 400 (sigma ~ 17.9)
    CHECK(changed >= 310);
    CHECK(changed <= 490);
}

TEST_CASE("baseline modes map onto selection rules") {
    CHECK(BaselineMode::ltw().rule().kind == SelectionRule::Kind::Selector);
    CHECK(BaselineMode::always_on().rule().kind == SelectionRule::Kind::AlwaysOn);
    auto gate = BaselineMode::entropy_gate(0.7);
    CHECK(gate.rule().kind == SelectionRule::Kind::EntropyThreshold);
    CHECK(gate.rule().entropy_threshold == 0.7);
    CHECK(BaselineMode::ltw().name() == "ltw");
    CHECK(BaselineMode::always_on().name() == "always-on");
    CHECK(gate.name() == "entropy-threshold");
    CHECK_THROWS_AS(BaselineMode::entropy_gate(-1.0), std::invalid_argument);
}

TEST_CASE("continuation perplexity matches a hand-computed value") {
    auto model = fit_ngram_text("a b a b", 1, 1.0, 16);
    const auto a = model.ids_of({"a"})[0];
    const auto b = model.ids_of({"b"})[0];
    // P(b|a) = 3/7, P(a|b) = 2/7 under add-one smoothing with |V| = 5
    const std::vector<TokenId> prompt{a};
    const std::vector<TokenId> output{b, a};
    CHECK(continuation_perplexity(model, prompt, output) ==
          doctest::Approx(2.857738033247041).epsilon(1e-12));
    CHECK_THROWS_AS(continuation_perplexity(model, prompt, {}), std::invalid_argument);
}

TEST_CASE("run_eval produces a full deterministic report") {
    auto model = toy_model();
    auto sel = selector_init(64, 32, 8, 8, 2024);

    std::vector<PromptCase> prompts;
    auto add = [&](std::vector<std::string> p, std::vector<std::string> ref) {
        prompts.push_back({model.ids_of(p), model.ids_of(ref)});
    };
    add({"the", "cat"}, {"sat", "on", "the", "mat", "and", "the", "dog"});
    add({"a", "dog"}, {"ran", "over", "the", "hill", "and", "the", "cat"});
    add({"the", "bird"}, {"flew", "over", "the", "hill", "while", "the", "cat"});
    add({"the", "mat"}, {"lay", "on", "the", "hill", "while", "the", "bird"});
    add({"a", "bird"}, {"sat", "on", "the", "hill", "while", "a", "dog"});
    add({"the", "dog"}, {"chased", "the", "cat", "and", "the", "bird", "flew"});

    EvalConfig cfg;
    cfg.max_new_tokens = 25;
    cfg.seed = 99;

    auto report = run_eval(model, sel, BaselineMode::always_on(), prompts, cfg);
    CHECK(report.mode == "always-on");
    REQUIRE(report.rows.size() == prompts.size());
    for (const auto& row : report.rows) {
        REQUIRE(row.attacked_z.size() == 3);
        CHECK(std::isfinite(row.clean_z));  // every token selected, so always scorable
        CHECK(row.ppl > 0.0);
        CHECK(std::isfinite(row.cos_sim));
    }
    CHECK(report.auroc_clean >= 0.0);
    CHECK(report.auroc_clean <= 1.0);
    CHECK(report.auroc_attacked.size() == 3);
    CHECK(report.mean_attacked_z.size() == 3);

    const auto csv = report.csv();
    CHECK(csv.rfind("prompt_id,mode,clean_z,attacked_z@0.05,attacked_z@0.1,"
                    "attacked_z@0.2,ppl,cos_sim\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == prompts.size() + 1);

    auto report2 = run_eval(model, sel, BaselineMode::always_on(), prompts, cfg);
    CHECK(report2.csv() == csv);
    CHECK(report2.summary() == report.summary());

    auto ltw_report = run_eval(model, sel, BaselineMode::ltw(), prompts, cfg);
    CHECK(ltw_report.mode == "ltw");
    REQUIRE(ltw_report.rows.size() == prompts.size());
}

TEST_CASE("an impossible entropy gate yields undetectable texts everywhere") {
    auto model = toy_model();
    auto sel = selector_init(64, 32, 8, 8, 2024);
    std::vector<PromptCase> prompts{{model.ids_of({"the", "cat"}),
                                     model.ids_of({"sat", "on", "the", "mat"})},
                                    {model.ids_of({"a", "dog"}),
                                     model.ids_of({"ran", "over", "the", "hill"})}};
    EvalConfig cfg;
    cfg.max_new_tokens = 15;

    auto report = run_eval(model, sel, BaselineMode::entropy_gate(1e18), prompts, cfg);
    for (const auto& row : report.rows) {
        CHECK(std::isnan(row.clean_z));
        CHECK(std::isnan(row.negative_z));
        for (double z : row.attacked_z) CHECK(std::isnan(z));
    }
    // all scores pool to 0: chance-level ranking, nothing admissible at 1% fpr
    CHECK(report.auroc_clean == 0.5);
    CHECK(report.tpr_at_1pct == 0.0);
}

TEST_CASE("run_eval validates its inputs") {
    auto model = toy_model();
    auto sel = selector_init(64, 32, 8, 8, 2024);
    EvalConfig cfg;
    CHECK_THROWS_AS(run_eval(model, sel, BaselineMode::ltw(), {}, cfg),
                    std::invalid_argument);
    std::vector<PromptCase> no_ref{{model.ids_of({"the", "cat"}), {}}};
    CHECK_THROWS_AS(run_eval(model, sel, BaselineMode::ltw(), no_ref, cfg),
                    std::invalid_argument);
    std::vector<PromptCase> ok{{model.ids_of({"the", "cat"}), model.ids_of({"sat"})}};
    EvalConfig bad_rate = cfg;
    bad_rate.attack_rates = {0.5, 1.0};
    CHECK_THROWS_AS(run_eval(model, sel, BaselineMode::ltw(), ok, bad_rate),
                    std::invalid_argument);
}
