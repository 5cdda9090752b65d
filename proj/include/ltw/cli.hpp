#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ltw/evalkit.hpp"
#include "ltw/pipeline.hpp"
#include "ltw/selector.hpp"
#include "ltw/token_model.hpp"
#include "ltw/trainer.hpp"

namespace ltw {

// Every knob of every command, resolvable from a flat key=value config file
// plus command-line overrides. Defaults are the reference settings.
struct RunConfig {
    // paths
    std::string corpus;
    std::string eval_corpus;
    std::string model_file;
    std::string selector_file;
    std::string out_dir = "out";

    // watermark
    std::string scheme = "context";  // context | fixed
    std::uint64_t key = 15485863;
    double gamma = 0.25;
    double delta = 3.0;

    // language model
    int order = 2;
    double alpha = 0.1;
    std::size_t vocab_cap = 1024;

    // sampler
    std::size_t top_k = 100;
    double top_p = 0.95;
    std::size_t no_repeat = 8;
    double temperature = 1.0;

    // selector
    std::size_t hidden1 = 32;
    std::size_t hidden2 = 8;
    std::size_t hidden3 = 8;
    double tau_low = 0.40;
    double tau_mid = 0.50;
    double tau_high = 0.60;
    double band_low = 0.35;
    double band_high = 0.65;

    // training
    double lambda_sim = 1.0;
    double lambda_entropy = 1.0;
    double lambda_fix = 1.0;
    double lambda_z = 0.05;
    double lambda_wm = 1.0;
    double lambda_e = 2.0;
    double mu_e = 1.2;
    std::string ratio_target = "one_minus_r";  // one_minus_r | sigmoid
    double lr = 1e-4;
    std::size_t batch = 5;
    std::size_t max_train_len = 75;
    std::size_t epochs = 1;
    std::size_t checkpoint_every = 200;

    // evaluation
    std::size_t n_prompts = 200;
    std::size_t gen_len = 200;
    std::size_t prompt_tokens = 20;
    std::size_t reference_words = 200;
    std::vector<double> attack_rates{0.05, 0.1, 0.2};
    std::string eval_modes = "ltw,always-on,entropy-threshold";
    double entropy_threshold = 1.2;

    std::uint64_t seed = 15485863;
};

// key=value lines; '#' starts a comment; unknown keys are errors.
RunConfig parse_config_text(const std::string& text);

// One "key=value" assignment on top of an existing config.
void apply_override(RunConfig& config, const std::string& assignment);

// Every key with its resolved value, in declaration order; parsing the echo
// reproduces the config exactly.
std::string echo_config(const RunConfig& config);

// Throws invalid_argument on any out-of-range value.
void validate_config(const RunConfig& config);

HashScheme scheme_from(const RunConfig& config);
SamplerConfig sampler_from(const RunConfig& config);
ThresholdPolicy policy_from(const RunConfig& config);
LossWeights weights_from(const RunConfig& config);
EvalConfig eval_config_from(const RunConfig& config);

// First `prompt_tokens` ids of each corpus document; documents with fewer
// words are skipped. With `want_reference`, up to `reference_words` following
// ids are attached and documents lacking at least one are skipped.
std::vector<PromptCase> slice_prompts(const TokenModel& model, const std::string& corpus_text,
                                      const RunConfig& config, bool want_reference,
                                      std::size_t max_cases);

// A detached token sequence with its prompt boundary, the detect input
// produced by `attack` (generate's records are also accepted by detect).
struct IdsFile {
    std::size_t prompt_len = 0;
    std::vector<TokenId> ids;
    std::string to_text() const;
    static IdsFile from_text(const std::string& text);
};

// Commands. Human-readable progress goes to `out`; artifacts go under
// config.out_dir, and each command also writes <command>_config.txt with the
// fully resolved configuration. Returns a process exit code.
int cmd_train_lm(const RunConfig& config, std::ostream& out);
int cmd_train_selector(const RunConfig& config, std::ostream& out);
int cmd_generate(const RunConfig& config, std::ostream& out);
int cmd_detect(const RunConfig& config, const std::string& in_path, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_attack(const RunConfig& config, const std::string& in_path, std::ostream& out);

}  // namespace ltw
