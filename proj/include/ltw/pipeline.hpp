#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ltw/partition.hpp"
#include "ltw/selector.hpp"
#include "ltw/token_model.hpp"

namespace ltw {

// Per-token selection strategy. Selector is the trained MLP path; AlwaysOn
// biases every token (KGW-style), EntropyThreshold biases tokens whose
// entropy exceeds a fixed cutoff (SWEET-style), AlwaysOff never biases.
struct SelectionRule {
    enum class Kind { Selector, AlwaysOn, AlwaysOff, EntropyThreshold };
    Kind kind = Kind::Selector;
    double entropy_threshold = 1.2;

    static SelectionRule selector() { return {Kind::Selector, 0.0}; }
    static SelectionRule always_on() { return {Kind::AlwaysOn, 0.0}; }
    static SelectionRule always_off() { return {Kind::AlwaysOff, 0.0}; }
    static SelectionRule entropy_gate(double threshold) {
        return {Kind::EntropyThreshold, threshold};
    }
};

struct StepAudit {
    double entropy = 0.0;
    double m_soft = 0.0;
    double tau = 0.0;
    bool green_hit = false;  // sampled token green under this step's mask
};

struct GenerationRecord {
    std::vector<TokenId> prompt;
    std::vector<TokenId> output;
    std::vector<int> mask;  // hard selection decision per output token
    std::vector<StepAudit> per_step;
    std::size_t fallback_count = 0;  // steps where the no-repeat filter banned everything

    std::string to_text() const;
    static GenerationRecord from_text(const std::string& text);
};

struct DetectionResult {
    std::size_t n_scored = 0;
    std::size_t n_green = 0;
    // finite iff n_scored >= 1; NaN means the text is undetectable
    double z = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> selected_positions;  // absolute indices into the full text

    bool detectable() const { return n_scored >= 1; }
};

// (n_green - gamma n) / sqrt(n gamma (1-gamma)); throws when n_scored == 0.
double z_score(std::size_t n_green, std::size_t n_scored, double gamma);

// Dilution check: keep the green count fixed but let `extra` unselected
// tokens enter the scored set. Returns (z_orig, z_new).
std::pair<double, double> z_degradation_check(std::size_t n_green, std::size_t n_scored,
                                              double gamma, std::size_t extra);

// Watermark injection. Per step: natural distribution and entropy on the
// prefix, ratio = mean of prior decisions (0 at the first step), window
// embedding over the last tokens of the prefix, rule decision; selected
// steps bias green logits by the full delta before sampling. Stops at EOS or
// after max_len tokens. Selection features always use the temperature-1
// distribution so detection can reproduce them without sampler settings.
GenerationRecord generate_with_rule(const TokenModel& model, const SelectionRule& rule,
                                    const SelectorParams* selector, const ThresholdPolicy& policy,
                                    const HashScheme& scheme, double gamma, double delta,
                                    const SamplerConfig& sampler, std::span<const TokenId> prompt,
                                    std::size_t max_len, SplitMix64& rng);

GenerationRecord generate_watermarked(const TokenModel& model, const SelectorParams& selector,
                                      const ThresholdPolicy& policy, const HashScheme& scheme,
                                      double gamma, double delta, const SamplerConfig& sampler,
                                      std::span<const TokenId> prompt, std::size_t max_len,
                                      SplitMix64& rng);

// Detection replays the selection rule over the text: for each position past
// the prompt it recomputes entropy, window embedding and ratio from its own
// reconstructed decisions, re-derives the green mask from the previous token
// and counts a green hit iff the observed token is green. Only selected
// positions are scored. Requires 1 <= prompt_len < len(full_text_ids).
DetectionResult detect_with_rule(const TokenModel& model, const SelectionRule& rule,
                                 const SelectorParams* selector, const ThresholdPolicy& policy,
                                 const HashScheme& scheme, double gamma,
                                 std::span<const TokenId> full_text_ids, std::size_t prompt_len);

DetectionResult detect(const TokenModel& model, const SelectorParams& selector,
                       const ThresholdPolicy& policy, const HashScheme& scheme, double gamma,
                       std::span<const TokenId> full_text_ids, std::size_t prompt_len);

// Score implied by a record's own audit trail (no model needed): counts green
// hits among selected steps and applies z_score.
DetectionResult audit_score(const GenerationRecord& record, double gamma);

} // namespace ltw
