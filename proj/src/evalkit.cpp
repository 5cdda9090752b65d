#include "ltw/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ltw/embedder.hpp"

namespace ltw {

namespace {

constexpr std::uint64_t kTagEvalWatermarked = 0x65766C77;  // "evlw"
constexpr std::uint64_t kTagEvalNegative = 0x65766C6E;     // "evln"
constexpr std::uint64_t kTagEvalAttack = 0x65766C61;       // "evla"

void validate_scores(const ScorePair& scores, const char* who) {
    if (scores.positives.empty() || scores.negatives.empty()) {
        throw std::invalid_argument(std::string(who) + ": both score sides must be non-empty");
    }
    for (double v : scores.positives) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite score");
    }
    for (double v : scores.negatives) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite score");
    }
}

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// undetectable texts carry z = NaN; for pooled metrics they score 0
double pooled(double z) { return std::isnan(z) ? 0.0 : z; }

}  // namespace

double auroc(const ScorePair& scores) {
    validate_scores(scores, "auroc");
    std::vector<double> neg = scores.negatives;
    std::sort(neg.begin(), neg.end());
    double acc = 0.0;
    for (double p : scores.positives) {
        const auto below = std::lower_bound(neg.begin(), neg.end(), p) - neg.begin();
        const auto not_above = std::upper_bound(neg.begin(), neg.end(), p) - neg.begin();
        acc += static_cast<double>(below) + 0.5 * static_cast<double>(not_above - below);
    }
    return acc /
           (static_cast<double>(scores.positives.size()) * static_cast<double>(neg.size()));
}

double best_f1(const ScorePair& scores) {
    validate_scores(scores, "best_f1");
    std::vector<double> pos = scores.positives;
    std::vector<double> neg = scores.negatives;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    std::vector<double> thresholds = pos;
    thresholds.insert(thresholds.end(), neg.begin(), neg.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double p_total = static_cast<double>(pos.size());
    double best = 0.0;
    for (double t : thresholds) {
        const double tp =
            static_cast<double>(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
        const double fp =
            static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
        // 2TP / (2TP + FP + FN); zero predictions give 0, never 0/0
        const double f1 = tp > 0.0 ? 2.0 * tp / (tp + fp + p_total) : 0.0;
        best = std::max(best, f1);
    }
    return best;
}

double tpr_at_fpr(const ScorePair& scores, double fpr) {
    validate_scores(scores, "tpr_at_fpr");
    if (!(fpr >= 0.0 && fpr < 1.0)) {
        throw std::invalid_argument("tpr_at_fpr: fpr must lie in [0,1)");
    }
    std::vector<double> pos = scores.positives;
    std::vector<double> neg = scores.negatives;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    std::vector<double> thresholds = pos;
    thresholds.insert(thresholds.end(), neg.begin(), neg.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double n_total = static_cast<double>(neg.size());
    const double p_total = static_cast<double>(pos.size());
    // the false-positive rate only falls as the threshold rises, so the first
    // qualifying value maximizes recall
    for (double t : thresholds) {
        const double fp =
            static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
        if (fp / n_total <= fpr) {
            const double tp =
                static_cast<double>(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
            return tp / p_total;
        }
    }
    return 0.0;
}

std::vector<TokenId> substitution_attack(std::span<const TokenId> tokens, double rate,
                                         const TokenModel& model, SplitMix64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("substitution_attack: rate must lie in [0,1)");
    }
    const std::size_t vocab = model.vocab_size();
    for (TokenId t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw std::invalid_argument("substitution_attack: token id out of range");
        }
    }
    const auto unigram = model.unigram_probs();
    std::vector<TokenId> out(tokens.begin(), tokens.end());
    for (auto& tok : out) {
        if (rng.next_double() >= rate) continue;
        double total = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
            if (static_cast<TokenId>(v) != tok) total += unigram[v];
        }
        const double u = rng.next_double() * total;
        double acc = 0.0;
        TokenId drawn = tok;
        for (std::size_t v = 0; v < vocab; ++v) {
            if (static_cast<TokenId>(v) == tok) continue;
            acc += unigram[v];
            drawn = static_cast<TokenId>(v);
            if (u < acc) break;
        }
        tok = drawn;
    }
    return out;
}

BaselineMode BaselineMode::entropy_gate(double threshold) {
    if (!(threshold >= 0.0)) {
        throw std::invalid_argument("BaselineMode: entropy threshold must be >= 0");
    }
    BaselineMode mode;
    mode.kind = Kind::EntropyThreshold;
    mode.entropy_threshold = threshold;
    return mode;
}

SelectionRule BaselineMode::rule() const {
    switch (kind) {
        case Kind::Ltw: return SelectionRule::selector();
        case Kind::AlwaysOn: return SelectionRule::always_on();
        case Kind::EntropyThreshold: return SelectionRule::entropy_gate(entropy_threshold);
    }
    throw std::logic_error("BaselineMode: unknown kind");
}

std::string BaselineMode::name() const {
    switch (kind) {
        case Kind::Ltw: return "ltw";
        case Kind::AlwaysOn: return "always-on";
        case Kind::EntropyThreshold: return "entropy-threshold";
    }
    throw std::logic_error("BaselineMode: unknown kind");
}

double continuation_perplexity(const TokenModel& model, std::span<const TokenId> prompt,
                               std::span<const TokenId> output) {
    if (output.empty()) {
        throw std::invalid_argument("continuation_perplexity: empty output");
    }
    std::vector<TokenId> seq(prompt.begin(), prompt.end());
    double nll = 0.0;
    for (TokenId tok : output) {
        nll -= std::log(model.prob(seq, tok));
        seq.push_back(tok);
    }
    return std::exp(nll / static_cast<double>(output.size()));
}

EvalReport run_eval(const TokenModel& model, const SelectorParams& selector,
                    const BaselineMode& mode, const std::vector<PromptCase>& prompts,
                    const EvalConfig& config) {
    if (prompts.empty()) {
        throw std::invalid_argument("run_eval: no prompts");
    }
    for (const auto& pc : prompts) {
        if (pc.prompt.empty()) throw std::invalid_argument("run_eval: empty prompt");
        if (pc.reference.empty()) throw std::invalid_argument("run_eval: empty reference");
    }
    for (double r : config.attack_rates) {
        if (!(r >= 0.0 && r < 1.0)) {
            throw std::invalid_argument("run_eval: attack rate must lie in [0,1)");
        }
    }

    const SelectionRule rule = mode.rule();
    const SelectorParams* sel = mode.kind == BaselineMode::Kind::Ltw ? &selector : nullptr;

    EvalReport report;
    report.mode = mode.name();
    report.attack_rates = config.attack_rates;
    report.auroc_attacked.assign(config.attack_rates.size(), 0.0);
    report.mean_attacked_z.assign(config.attack_rates.size(), 0.0);

    ScorePair clean;
    std::vector<ScorePair> attacked(config.attack_rates.size());

    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const auto& pc = prompts[i];
        EvalRow row;
        row.prompt_id = i;

        SplitMix64 rng_w(derive_substream(config.seed, kTagEvalWatermarked, i));
        auto rec = generate_with_rule(model, rule, sel, config.policy, config.scheme,
                                      config.gamma, config.delta, config.sampler, pc.prompt,
                                      config.max_new_tokens, rng_w);
        std::vector<TokenId> full = pc.prompt;
        full.insert(full.end(), rec.output.begin(), rec.output.end());
        row.clean_z = detect_with_rule(model, rule, sel, config.policy, config.scheme,
                                       config.gamma, full, pc.prompt.size())
                          .z;

        // the unwatermarked twin: plain sampling, detected with the same rule
        SplitMix64 rng_n(derive_substream(config.seed, kTagEvalNegative, i));
        auto rec_n = generate_with_rule(model, SelectionRule::always_off(), nullptr,
                                        config.policy, config.scheme, config.gamma,
                                        config.delta, config.sampler, pc.prompt,
                                        config.max_new_tokens, rng_n);
        std::vector<TokenId> full_n = pc.prompt;
        full_n.insert(full_n.end(), rec_n.output.begin(), rec_n.output.end());
        row.negative_z = detect_with_rule(model, rule, sel, config.policy, config.scheme,
                                          config.gamma, full_n, pc.prompt.size())
                             .z;

        for (std::size_t k = 0; k < config.attack_rates.size(); ++k) {
            SplitMix64 rng_a(derive_substream(
                derive_substream(config.seed, kTagEvalAttack, i), kTagEvalAttack, k));
            auto hit = substitution_attack(rec.output, config.attack_rates[k], model, rng_a);
            std::vector<TokenId> full_a = pc.prompt;
            full_a.insert(full_a.end(), hit.begin(), hit.end());
            row.attacked_z.push_back(detect_with_rule(model, rule, sel, config.policy,
                                                      config.scheme, config.gamma, full_a,
                                                      pc.prompt.size())
                                         .z);
        }

        row.ppl = continuation_perplexity(model, pc.prompt, rec.output);
        const auto e_out = embed_window(rec.output, model.vocab_size(), kEmbedDim);
        const auto e_ref = embed_window(pc.reference, model.vocab_size(), kEmbedDim);
        row.cos_sim = cosine_similarity(e_out, e_ref);

        clean.positives.push_back(pooled(row.clean_z));
        clean.negatives.push_back(pooled(row.negative_z));
        for (std::size_t k = 0; k < attacked.size(); ++k) {
            attacked[k].positives.push_back(pooled(row.attacked_z[k]));
        }
        report.rows.push_back(std::move(row));
    }
    for (auto& sp : attacked) sp.negatives = clean.negatives;

    const double inv = 1.0 / static_cast<double>(prompts.size());
    for (const auto& row : report.rows) {
        report.mean_clean_z += pooled(row.clean_z) * inv;
        report.mean_negative_z += pooled(row.negative_z) * inv;
        report.mean_abs_negative_z += std::abs(pooled(row.negative_z)) * inv;
        report.mean_ppl += row.ppl * inv;
        report.mean_cos += row.cos_sim * inv;
        for (std::size_t k = 0; k < row.attacked_z.size(); ++k) {
            report.mean_attacked_z[k] += pooled(row.attacked_z[k]) * inv;
        }
    }
    report.auroc_clean = auroc(clean);
    report.best_f1_clean = best_f1(clean);
    report.tpr_at_1pct = tpr_at_fpr(clean, 0.01);
    report.tpr_at_2pct = tpr_at_fpr(clean, 0.02);
    report.tpr_at_10pct = tpr_at_fpr(clean, 0.10);
    for (std::size_t k = 0; k < attacked.size(); ++k) {
        report.auroc_attacked[k] = auroc(attacked[k]);
    }
    return report;
}

std::string EvalReport::csv() const {
    std::string out = "prompt_id,mode,clean_z";
    for (double r : attack_rates) {
        out += ",attacked_z@" + format_short(r);
    }
    out += ",ppl,cos_sim\n";
    for (const auto& row : rows) {
        out += std::to_string(row.prompt_id) + "," + mode + "," + format_value(row.clean_z);
        for (double z : row.attacked_z) out += "," + format_value(z);
        out += "," + format_value(row.ppl) + "," + format_value(row.cos_sim) + "\n";
    }
    return out;
}

std::string EvalReport::summary() const {
    std::string out;
    out += "mode: " + mode + "\n";
    out += "prompts: " + std::to_string(rows.size()) + "\n";
    out += "auroc: " + format_short(auroc_clean) + "\n";
    out += "best_f1: " + format_short(best_f1_clean) + "\n";
    out += "tpr@1%: " + format_short(tpr_at_1pct) + "\n";
    out += "tpr@2%: " + format_short(tpr_at_2pct) + "\n";
    out += "tpr@10%: " + format_short(tpr_at_10pct) + "\n";
    out += "mean_clean_z: " + format_short(mean_clean_z) + "\n";
    out += "mean_unwatermarked_z: " + format_short(mean_negative_z) + "\n";
    out += "mean_abs_unwatermarked_z: " + format_short(mean_abs_negative_z) + "\n";
    out += "mean_ppl: " + format_short(mean_ppl) + "\n";
    out += "mean_cos_sim: " + format_short(mean_cos) + "\n";
    for (std::size_t k = 0; k < attack_rates.size(); ++k) {
        out += "attacked@" + format_short(attack_rates[k]) +
               ": mean_z=" + format_short(mean_attacked_z[k]) +
               " auroc=" + format_short(auroc_attacked[k]) + "\n";
    }
    return out;
}

}  // namespace ltw
