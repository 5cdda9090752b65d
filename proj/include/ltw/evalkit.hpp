#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ltw/pipeline.hpp"
#include "ltw/rng.hpp"
#include "ltw/selector.hpp"
#include "ltw/token_model.hpp"

namespace ltw {

// Detection scores of watermarked (positives) and unwatermarked (negatives)
// texts. Metric functions require both sides non-empty and all values finite.
struct ScorePair {
    std::vector<double> positives;
    std::vector<double> negatives;
};

// Mann-Whitney rank statistic; ties credited one half.
double auroc(const ScorePair& scores);

// Maximum F1 over thresholds at the distinct score values; a text is
// classified positive when its score is >= the threshold.
double best_f1(const ScorePair& scores);

// Smallest threshold whose empirical false-positive rate is <= fpr, then the
// fraction of positives at or above it. 0 when no threshold qualifies.
double tpr_at_fpr(const ScorePair& scores, double fpr);

// Each position is independently replaced with probability `rate` by a draw
// from the model's unigram distribution with the original token excluded.
std::vector<TokenId> substitution_attack(std::span<const TokenId> tokens, double rate,
                                         const TokenModel& model, SplitMix64& rng);

// Which injection rule an evaluation run exercises: the trained selector, a
// watermark on every token, or a fixed entropy gate.
struct BaselineMode {
    enum class Kind { Ltw, AlwaysOn, EntropyThreshold };

    Kind kind = Kind::Ltw;
    double entropy_threshold = 1.2;

    static BaselineMode ltw() { return {Kind::Ltw, 0.0}; }
    static BaselineMode always_on() { return {Kind::AlwaysOn, 0.0}; }
    static BaselineMode entropy_gate(double threshold);

    SelectionRule rule() const;
    std::string name() const;
};

// Perplexity of `output` given `prompt`: exp of mean negative log-likelihood
// over the output positions only.
double continuation_perplexity(const TokenModel& model, std::span<const TokenId> prompt,
                               std::span<const TokenId> output);

struct PromptCase {
    std::vector<TokenId> prompt;
    std::vector<TokenId> reference;  // held-out continuation for the cosine report
};

struct EvalConfig {
    HashScheme scheme = HashScheme::context_hash(15485863);
    double gamma = 0.25;
    double delta = 3.0;
    SamplerConfig sampler;
    ThresholdPolicy policy;
    std::size_t max_new_tokens = 200;
    std::vector<double> attack_rates{0.05, 0.1, 0.2};
    std::uint64_t seed = 15485863;
};

struct EvalRow {
    std::size_t prompt_id = 0;
    double clean_z = 0.0;  // NaN when no token was scored
    std::vector<double> attacked_z;
    double ppl = 0.0;
    double cos_sim = 0.0;
    double negative_z = 0.0;  // same-rule detection of the unwatermarked twin
};

struct EvalReport {
    std::string mode;
    std::vector<double> attack_rates;
    std::vector<EvalRow> rows;

    // pooled metrics; an undetectable text scores 0 (no evidence either way)
    double auroc_clean = 0.0;
    std::vector<double> auroc_attacked;
    double best_f1_clean = 0.0;
    double tpr_at_1pct = 0.0;
    double tpr_at_2pct = 0.0;
    double tpr_at_10pct = 0.0;

    double mean_clean_z = 0.0;
    std::vector<double> mean_attacked_z;
    double mean_negative_z = 0.0;
    double mean_abs_negative_z = 0.0;
    double mean_ppl = 0.0;
    double mean_cos = 0.0;

    std::string csv() const;
    std::string summary() const;
};

// For every prompt: watermark a generation under the mode's rule, detect it
// clean and after substitution attacks at each rate, generate an
// unwatermarked twin and detect it with the same rule, and report
// continuation perplexity plus cosine similarity to the held-out reference.
EvalReport run_eval(const TokenModel& model, const SelectorParams& selector,
                    const BaselineMode& mode, const std::vector<PromptCase>& prompts,
                    const EvalConfig& config);

}  // namespace ltw
