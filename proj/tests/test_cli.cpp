#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ltw/cli.hpp"
#include "ltw/corpus.hpp"
#include "ltw/embedder.hpp"

using namespace ltw;

namespace {

struct Scratch {
    std::filesystem::path dir;
    explicit Scratch(const char* name) : dir(std::filesystem::path("cli_scratch") / name) {
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
    }
    std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out << content;
}

// small corpus shared by the command tests; regenerating is cheap and keeps
// every test self-contained under its own scratch directory
void write_corpus(const Scratch& s, std::size_t train_docs = 150, std::size_t eval_docs = 12) {
    CorpusSpec spec;
    spec.train_docs = train_docs;
    spec.eval_docs = eval_docs;
    spec.train_doc_words = 45;
    spec.eval_doc_words = 120;
    const auto corpus = synth_corpus(spec);
    spit(s.path("train.txt"), corpus.train);
    if (eval_docs > 0) spit(s.path("eval.txt"), corpus.eval);
}

RunConfig base_config(const Scratch& s) {
    RunConfig c;
    c.corpus = s.path("train.txt");
    c.eval_corpus = s.path("eval.txt");
    c.model_file = s.path("model.txt");
    c.selector_file = s.path("sel.txt");
    c.out_dir = s.path("out");
    return c;
}

}  // namespace

TEST_CASE("config echo and parse round-trip exactly") {
    RunConfig c;
    c.corpus = "a.txt";
    c.gamma = 0.3125;
    c.attack_rates = {0.03, 0.17};
    c.eval_modes = "ltw,always-on";
    c.seed = 77;
    const auto echoed = echo_config(c);
    const auto reparsed = parse_config_text(echoed);
    CHECK(echo_config(reparsed) == echoed);
    CHECK(reparsed.gamma == c.gamma);
    CHECK(reparsed.attack_rates == c.attack_rates);

    // defaults survive an empty config and echo in declaration order
    const auto d = parse_config_text("");
    CHECK(echo_config(d).rfind("corpus = \n", 0) == 0);
    CHECK(d.gamma == 0.25);
    CHECK(d.key == 15485863);
}

TEST_CASE("config parser handles comments, blanks, and rejects junk") {
    const auto c = parse_config_text("# comment\n\n  gamma = 0.5  # trailing\n\tdelta=1\n");
    CHECK(c.gamma == 0.5);
    CHECK(c.delta == 1.0);

    CHECK_THROWS_AS(parse_config_text("nonsense_key = 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("gamma 0.5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("gamma = abc\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("key = -4\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("attack_rates = \n"), std::invalid_argument);
}

TEST_CASE("overrides update one key and reject malformed input") {
    RunConfig c;
    apply_override(c, "delta=4.5");
    CHECK(c.delta == 4.5);
    apply_override(c, "eval_modes=ltw");
    CHECK(c.eval_modes == "ltw");
    CHECK_THROWS_AS(apply_override(c, "delta"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(c, "nope=1"), std::invalid_argument);
}

TEST_CASE("config validation rejects out-of-range settings") {
    RunConfig c;
    CHECK_NOTHROW(validate_config(c));
    auto bad = [&](const char* assignment) {
        RunConfig b = c;
        apply_override(b, assignment);
        CHECK_THROWS_AS(validate_config(b), std::invalid_argument);
    };
    bad("gamma=1.5");
    bad("gamma=0");
    bad("delta=-1");
    bad("scheme=quantum");
    bad("order=0");
    bad("order=9");
    bad("alpha=0");
    bad("vocab_cap=8");
    bad("top_p=0");
    bad("top_p=1.5");
    bad("temperature=0");
    bad("tau_mid=1.5");
    bad("band_low=0.9");  // above band_high
    bad("ratio_target=cubic");
    bad("lr=0");
    bad("batch=0");
    bad("attack_rates=1.0");
    bad("eval_modes=sorcery");
    bad("lambda_z=-0.5");
}

TEST_CASE("derived configs map onto the library types") {
    RunConfig c;
    c.scheme = "fixed";
    c.key = 99;
    c.band_low = 0.30;
    c.band_high = 0.70;
    const auto policy = policy_from(c);
    CHECK(policy.low_band == 0.30);
    CHECK(policy.high_band == 0.70);
    CHECK(policy.tau_mid == 0.50);
    const auto sampler = sampler_from(c);
    CHECK(sampler.top_k == 100);
    CHECK(sampler.no_repeat_ngram == 8);
    const auto weights = weights_from(c);
    CHECK(weights.lambda_z == 0.05);
    CHECK(weights.mu_e == 1.2);
    const auto ev = eval_config_from(c);
    CHECK(ev.max_new_tokens == c.gen_len);
    CHECK(ev.attack_rates == c.attack_rates);
    CHECK(ev.seed == c.seed);
}

TEST_CASE("ids file round-trips and rejects corrupt input") {
    IdsFile f;
    f.prompt_len = 3;
    f.ids = {5, 6, 7, 8, 9};
    const auto text = f.to_text();
    CHECK(text.rfind("LTW-IDS v1\n", 0) == 0);
    const auto back = IdsFile::from_text(text);
    CHECK(back.prompt_len == 3);
    CHECK(back.ids == f.ids);

    CHECK_THROWS_AS(IdsFile::from_text("garbage"), std::runtime_error);
    CHECK_THROWS_AS(IdsFile::from_text("LTW-IDS v1\nprompt_len 3\ntokens 5\n1\n2\n"),
                    std::runtime_error);
    CHECK_THROWS_AS(IdsFile::from_text("LTW-IDS v1\nprompt_len 9\ntokens 2\n1\n2\n"),
                    std::runtime_error);
}

TEST_CASE("prompt slicing takes a fixed prefix and optional reference") {
    Scratch s("slice");
    write_corpus(s, 60, 6);
    const auto model = fit_ngram_text(slurp(s.path("train.txt")), 2, 0.1, 512);
    RunConfig c;
    c.prompt_tokens = 10;
    c.reference_words = 30;
    const auto text = slurp(s.path("eval.txt"));
    const auto cases = slice_prompts(model, text, c, true, 4);
    CHECK(cases.size() == 4);
    for (const auto& pc : cases) {
        CHECK(pc.prompt.size() == 10);
        CHECK(pc.reference.size() == 30);
    }
    const auto bare = slice_prompts(model, text, c, false, 1000);
    CHECK(bare.size() == 6);
    CHECK(bare[0].reference.empty());

    CHECK_THROWS_AS(slice_prompts(model, "too short\n", c, false, 4), std::runtime_error);
}

TEST_CASE("train-lm fits, reports, and reruns byte-identically") {
    Scratch s("trainlm");
    write_corpus(s);
    auto c = base_config(s);

    std::ostringstream out1;
    CHECK(cmd_train_lm(c, out1) == 0);
    const auto model_text = slurp(c.model_file);
    const auto model = TokenModel::from_text(model_text);
    CHECK(model.vocab_size() > 16);
    CHECK(out1.str().find("holdout_ppl=") != std::string::npos);
    CHECK(out1.str().find("unk_fraction=0\n") != std::string::npos);
    CHECK(slurp(c.out_dir + "/train-lm_config.txt") == echo_config(c));

    std::ostringstream out2;
    CHECK(cmd_train_lm(c, out2) == 0);
    CHECK(slurp(c.model_file) == model_text);
    CHECK(out2.str() == out1.str());

    // a tiny vocabulary cap forces real tokens out of the model
    auto capped = c;
    capped.vocab_cap = 16;
    capped.model_file = s.path("model_capped.txt");
    std::ostringstream out3;
    CHECK(cmd_train_lm(capped, out3) == 0);
    CHECK(out3.str().find("unk_fraction=0\n") == std::string::npos);
    CHECK(TokenModel::from_text(slurp(capped.model_file)).vocab_size() <= 16 + 3);

    auto missing = c;
    missing.corpus = s.path("nope.txt");
    std::ostringstream sink;
    CHECK_THROWS_AS(cmd_train_lm(missing, sink), std::runtime_error);
}

TEST_CASE("train-selector writes history, checkpoints, and honors epochs=0") {
    Scratch s("trainsel");
    write_corpus(s, 40, 0);
    auto c = base_config(s);
    c.eval_corpus.clear();
    c.hidden1 = 6;
    c.hidden2 = 4;
    c.hidden3 = 3;
    c.batch = 8;
    c.max_train_len = 15;
    c.checkpoint_every = 3;

    std::ostringstream lm_out;
    REQUIRE(cmd_train_lm(c, lm_out) == 0);

    SUBCASE("epochs=0 stores the untouched initialization") {
        c.epochs = 0;
        std::ostringstream out;
        CHECK(cmd_train_selector(c, out) == 0);
        const auto init = selector_init(kEmbedDim, c.hidden1, c.hidden2, c.hidden3, c.seed);
        CHECK(slurp(c.selector_file) == selector_save(init));
        CHECK(slurp(c.out_dir + "/history.csv") ==
              "step,L_Q,L_D,z_mean,lambda_star,wall_ms\n");
    }

    SUBCASE("one epoch trains deterministically with checkpoints") {
        c.epochs = 1;
        std::ostringstream out1;
        CHECK(cmd_train_selector(c, out1) == 0);
        const auto sel_text = slurp(c.selector_file);
        const auto history = slurp(c.out_dir + "/history.csv");
        // 40 prompts, batch 8: five optimizer steps
        CHECK(out1.str().find("steps=5") != std::string::npos);
        CHECK(std::count(history.begin(), history.end(), '\n') == 6);
        CHECK(std::filesystem::exists(c.out_dir + "/checkpoint_3.txt"));
        CHECK_FALSE(std::filesystem::exists(c.out_dir + "/checkpoint_5.txt"));
        const auto ckpt = selector_load(slurp(c.out_dir + "/checkpoint_3.txt"));
        CHECK(ckpt.theta.size() == selector_load(sel_text).theta.size());

        auto c2 = c;
        c2.selector_file = s.path("sel2.txt");
        c2.out_dir = s.path("out2");
        std::ostringstream out2;
        CHECK(cmd_train_selector(c2, out2) == 0);
        CHECK(slurp(c2.selector_file) == sel_text);
        CHECK(slurp(c2.out_dir + "/history.csv") == history);
        CHECK(out2.str() == out1.str());
    }
}

TEST_CASE("generate, detect, attack, and eval close the loop") {
    Scratch s("loop");
    write_corpus(s, 150, 8);
    auto c = base_config(s);
    c.hidden1 = 6;
    c.hidden2 = 4;
    c.hidden3 = 3;
    c.n_prompts = 4;
    c.gen_len = 40;
    c.attack_rates = {0.1, 0.3};

    std::ostringstream sink;
    REQUIRE(cmd_train_lm(c, sink) == 0);
    auto tc = c;
    tc.epochs = 0;  // untrained selector is fine for plumbing checks
    REQUIRE(cmd_train_selector(tc, sink) == 0);

    std::ostringstream gen_out;
    REQUIRE(cmd_generate(c, gen_out) == 0);
    CHECK(gen_out.str().find("records=4") != std::string::npos);
    for (int i = 0; i < 4; ++i) {
        const auto rec =
            GenerationRecord::from_text(slurp(c.out_dir + "/record_" + std::to_string(i) + ".txt"));
        CHECK(rec.prompt.size() == c.prompt_tokens);
        CHECK(rec.output.size() <= c.gen_len);
        CHECK(!rec.output.empty());
    }

    SUBCASE("generation is deterministic per prompt index") {
        auto c2 = c;
        c2.out_dir = s.path("out_gen2");
        std::ostringstream out2;
        REQUIRE(cmd_generate(c2, out2) == 0);
        CHECK(slurp(c2.out_dir + "/record_0.txt") == slurp(c.out_dir + "/record_0.txt"));
        CHECK(slurp(c2.out_dir + "/record_3.txt") == slurp(c.out_dir + "/record_3.txt"));
        CHECK(out2.str() == gen_out.str());
    }

    SUBCASE("detect output matches the record's own audit trail") {
        const auto rec_path = c.out_dir + "/record_0.txt";
        const auto rec = GenerationRecord::from_text(slurp(rec_path));
        const auto audit = audit_score(rec, c.gamma);
        std::ostringstream det_out;
        CHECK(cmd_detect(c, rec_path, det_out) == 0);
        char expect[64];
        std::snprintf(expect, sizeof expect, "z=%.17g ", audit.z);
        CHECK(det_out.str().rfind(expect, 0) == 0);
        CHECK(det_out.str().find("n_scored=" + std::to_string(audit.n_scored)) !=
              std::string::npos);
        CHECK(det_out.str().find("n_green=" + std::to_string(audit.n_green)) !=
              std::string::npos);
    }

    SUBCASE("attack emits ids files that detect can score") {
        const auto rec_path = c.out_dir + "/record_0.txt";
        std::ostringstream atk_out;
        CHECK(cmd_attack(c, rec_path, atk_out) == 0);
        CHECK(atk_out.str().find("rate=0.1") != std::string::npos);
        CHECK(atk_out.str().find("rate=0.3") != std::string::npos);

        const auto ids_path = c.out_dir + "/attacked_rate_0.3.txt";
        const auto f = IdsFile::from_text(slurp(ids_path));
        const auto rec = GenerationRecord::from_text(slurp(rec_path));
        CHECK(f.prompt_len == rec.prompt.size());
        CHECK(f.ids.size() == rec.prompt.size() + rec.output.size());

        std::ostringstream det_out;
        CHECK(cmd_detect(c, ids_path, det_out) == 0);
        CHECK(det_out.str().rfind("z=", 0) == 0);

        std::ostringstream bad;
        CHECK_THROWS_AS(cmd_attack(c, ids_path, bad), std::runtime_error);
    }

    SUBCASE("eval writes one report across all requested modes") {
        auto ec = c;
        ec.gen_len = 30;
        std::ostringstream ev1;
        CHECK(cmd_eval(ec, ev1) == 0);
        const auto csv = slurp(ec.out_dir + "/report.csv");
        const auto summary = slurp(ec.out_dir + "/summary.txt");
        CHECK(csv.rfind("prompt_id,mode,clean_z,attacked_z@0.1,attacked_z@0.3,ppl,cos_sim\n",
                        0) == 0);
        // one header plus 4 prompts for each of the three modes
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
        CHECK(summary.find("mode: ltw") != std::string::npos);
        CHECK(summary.find("mode: always-on") != std::string::npos);
        CHECK(summary.find("mode: entropy-threshold") != std::string::npos);
        CHECK(ev1.str() == summary);

        auto ec2 = ec;
        ec2.out_dir = s.path("out_eval2");
        std::ostringstream ev2;
        CHECK(cmd_eval(ec2, ev2) == 0);
        CHECK(slurp(ec2.out_dir + "/report.csv") == csv);
        CHECK(slurp(ec2.out_dir + "/summary.txt") == summary);
    }

    SUBCASE("detect rejects files in no known format") {
        spit(s.path("junk.txt"), "not a record\n");
        std::ostringstream det_out;
        CHECK_THROWS_AS(cmd_detect(c, s.path("junk.txt"), det_out), std::runtime_error);
    }
}
