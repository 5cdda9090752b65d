#include "ltw/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ltw/embedder.hpp"

namespace ltw {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Decision {
    double m = 0.0;
    double tau = 0.0;
    bool hard = false;
};

Decision decide(const SelectionRule& rule, const SelectorParams* selector,
                const ThresholdPolicy& policy, const TokenModel& model,
                std::span<const TokenId> prefix, double e, double r) {
    switch (rule.kind) {
    case SelectionRule::Kind::Selector: {
        if (!selector)
            throw std::invalid_argument("selection: Selector rule needs selector weights");
        const std::size_t k = std::min(prefix.size(), kEmbedWindow);
        const auto window = prefix.subspan(prefix.size() - k, k);
        const auto emb = embed_window(window, model.vocab_size(), selector->dim);
        SelectorCache cache;
        const double m = selector_forward(*selector, emb, e, r, cache);
        const double tau = adaptive_threshold(policy, r);
        return {m, tau, harden(m, tau) == 1};
    }
    case SelectionRule::Kind::AlwaysOn:
        return {1.0, 0.0, true};
    case SelectionRule::Kind::AlwaysOff:
        return {0.0, 1.0, false};
    case SelectionRule::Kind::EntropyThreshold: {
        const bool on = e > rule.entropy_threshold;
        return {on ? 1.0 : 0.0, rule.entropy_threshold, on};
    }
    }
    throw std::invalid_argument("selection: unknown rule");
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size, const char* where) {
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
            throw std::invalid_argument(std::string(where) + ": token id out of range");
    }
}

// Caches the mask across steps; FixedKey (and repeated previous tokens)
// re-derive the same seed, so the permutation is skipped.
struct MaskCache {
    std::uint64_t seed = 0;
    bool valid = false;
    GreenMask mask;

    const GreenMask& get(std::size_t vocab, double gamma, std::uint64_t s) {
        if (!valid || s != seed) {
            mask = green_mask(vocab, gamma, s);
            seed = s;
            valid = true;
        }
        return mask;
    }
};

} // namespace

double z_score(std::size_t n_green, std::size_t n_scored, double gamma) {
    if (n_scored == 0)
        throw std::invalid_argument("z_score: no scored tokens, result undetectable");
    if (n_green > n_scored)
        throw std::invalid_argument("z_score: n_green exceeds n_scored");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("z_score: gamma must lie in (0,1)");
    const double n = static_cast<double>(n_scored);
    return (static_cast<double>(n_green) - gamma * n) / std::sqrt(n * gamma * (1.0 - gamma));
}

std::pair<double, double> z_degradation_check(std::size_t n_green, std::size_t n_scored,
                                              double gamma, std::size_t extra) {
    if (extra == 0) throw std::invalid_argument("z_degradation_check: extra must be >= 1");
    const double z_orig = z_score(n_green, n_scored, gamma);
    const double n = static_cast<double>(n_scored);
    const double n_new = n + static_cast<double>(extra);
    const double z_new = (static_cast<double>(n_green) - gamma * n) /
                         std::sqrt(n_new * gamma * (1.0 - gamma));
    return {z_orig, z_new};
}

GenerationRecord generate_with_rule(const TokenModel& model, const SelectionRule& rule,
                                    const SelectorParams* selector, const ThresholdPolicy& policy,
                                    const HashScheme& scheme, double gamma, double delta,
                                    const SamplerConfig& sampler, std::span<const TokenId> prompt,
                                    std::size_t max_len, SplitMix64& rng) {
    if (prompt.empty()) throw std::invalid_argument("generate: prompt must be non-empty");
    if (max_len == 0) throw std::invalid_argument("generate: max_len must be >= 1");
    if (delta < 0.0) throw std::invalid_argument("generate: delta must be >= 0");
    check_ids(prompt, model.vocab_size(), "generate");

    GenerationRecord rec;
    rec.prompt.assign(prompt.begin(), prompt.end());

    std::vector<TokenId> seq(prompt.begin(), prompt.end());
    MaskCache masks;
    std::size_t selected = 0;

    for (std::size_t step = 0; step < max_len; ++step) {
        const auto logits = model.logits(seq);
        const auto p_nat = softmax(logits);
        const double e = entropy(p_nat);
        const double r = rec.mask.empty()
                             ? 0.0
                             : static_cast<double>(selected) /
                                   static_cast<double>(rec.mask.size());

        const Decision d = decide(rule, selector, policy, model, seq, e, r);

        const auto& mask = masks.get(model.vocab_size(), gamma, derive_seed(scheme, seq.back()));

        bool fallback = false;
        TokenId tok;
        if (d.hard) {
            const auto biased = apply_bias(logits, mask, delta, 1.0);
            const auto p_wm = softmax(biased, sampler.temperature);
            tok = sample(p_wm, sampler, seq, rng, &fallback);
        } else if (sampler.temperature == 1.0) {
            tok = sample(p_nat, sampler, seq, rng, &fallback);
        } else {
            const auto p_t = softmax(logits, sampler.temperature);
            tok = sample(p_t, sampler, seq, rng, &fallback);
        }
        if (fallback) ++rec.fallback_count;

        rec.output.push_back(tok);
        rec.mask.push_back(d.hard ? 1 : 0);
        rec.per_step.push_back({e, d.m, d.tau, mask.is_green(tok)});
        if (d.hard) ++selected;
        seq.push_back(tok);
        if (tok == TokenModel::kEos) break;
    }
    return rec;
}

GenerationRecord generate_watermarked(const TokenModel& model, const SelectorParams& selector,
                                      const ThresholdPolicy& policy, const HashScheme& scheme,
                                      double gamma, double delta, const SamplerConfig& sampler,
                                      std::span<const TokenId> prompt, std::size_t max_len,
                                      SplitMix64& rng) {
    return generate_with_rule(model, SelectionRule::selector(), &selector, policy, scheme, gamma,
                              delta, sampler, prompt, max_len, rng);
}

DetectionResult detect_with_rule(const TokenModel& model, const SelectionRule& rule,
                                 const SelectorParams* selector, const ThresholdPolicy& policy,
                                 const HashScheme& scheme, double gamma,
                                 std::span<const TokenId> full_text_ids, std::size_t prompt_len) {
    if (prompt_len == 0)
        throw std::invalid_argument("detect: prompt_len must be >= 1");
    if (prompt_len >= full_text_ids.size())
        throw std::invalid_argument("detect: nothing to score past the prompt");
    check_ids(full_text_ids, model.vocab_size(), "detect");

    DetectionResult res;
    MaskCache masks;
    std::size_t decisions = 0, selected = 0;

    for (std::size_t t = prompt_len; t < full_text_ids.size(); ++t) {
        const auto prefix = full_text_ids.subspan(0, t);
        const auto logits = model.logits(prefix);
        const auto p_nat = softmax(logits);
        const double e = entropy(p_nat);
        const double r = decisions == 0
                             ? 0.0
                             : static_cast<double>(selected) / static_cast<double>(decisions);

        const Decision d = decide(rule, selector, policy, model, prefix, e, r);
        ++decisions;
        if (d.hard) {
            ++selected;
            res.selected_positions.push_back(t);
            const auto& mask =
                masks.get(model.vocab_size(), gamma, derive_seed(scheme, full_text_ids[t - 1]));
            if (mask.is_green(full_text_ids[t])) ++res.n_green;
        }
    }
    res.n_scored = selected;
    if (res.n_scored > 0) res.z = z_score(res.n_green, res.n_scored, gamma);
    return res;
}

DetectionResult detect(const TokenModel& model, const SelectorParams& selector,
                       const ThresholdPolicy& policy, const HashScheme& scheme, double gamma,
                       std::span<const TokenId> full_text_ids, std::size_t prompt_len) {
    return detect_with_rule(model, SelectionRule::selector(), &selector, policy, scheme, gamma,
                            full_text_ids, prompt_len);
}

DetectionResult audit_score(const GenerationRecord& record, double gamma) {
    DetectionResult res;
    for (std::size_t i = 0; i < record.mask.size(); ++i) {
        if (record.mask[i] == 0) continue;
        ++res.n_scored;
        res.selected_positions.push_back(record.prompt.size() + i);
        if (record.per_step[i].green_hit) ++res.n_green;
    }
    if (res.n_scored > 0) res.z = z_score(res.n_green, res.n_scored, gamma);
    return res;
}

std::string GenerationRecord::to_text() const {
    std::ostringstream out;
    out << "LTW-RECORD v1\n";
    out << "prompt " << prompt.size() << "\n";
    for (std::size_t i = 0; i < prompt.size(); ++i)
        out << prompt[i] << (i + 1 == prompt.size() ? "\n" : " ");
    out << "output " << output.size() << "\n";
    for (std::size_t i = 0; i < output.size(); ++i)
        out << output[i] << (i + 1 == output.size() ? "\n" : " ");
    out << "mask " << mask.size() << "\n";
    for (std::size_t i = 0; i < mask.size(); ++i)
        out << mask[i] << (i + 1 == mask.size() ? "\n" : " ");
    out << "audit " << per_step.size() << "\n";
    for (const auto& s : per_step) {
        out << fmt_double(s.entropy) << " " << fmt_double(s.m_soft) << " " << fmt_double(s.tau)
            << " " << (s.green_hit ? 1 : 0) << "\n";
    }
    out << "fallbacks " << fallback_count << "\n";
    return out.str();
}

GenerationRecord GenerationRecord::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "LTW-RECORD v1")
        throw std::runtime_error("record load: bad header");

    auto read_count = [&](const char* tag) {
        if (!std::getline(in, line)) throw std::runtime_error("record load: truncated");
        std::istringstream ls(line);
        std::string got;
        std::size_t n = 0;
        if (!(ls >> got >> n) || got != tag)
            throw std::runtime_error(std::string("record load: expected ") + tag);
        return n;
    };

    GenerationRecord rec;
    std::size_t n = read_count("prompt");
    if (n > 0) {
        if (!std::getline(in, line)) throw std::runtime_error("record load: truncated prompt");
        std::istringstream ls(line);
        TokenId id;
        while (ls >> id) rec.prompt.push_back(id);
    }
    if (rec.prompt.size() != n) throw std::runtime_error("record load: prompt length mismatch");

    n = read_count("output");
    if (n > 0) {
        if (!std::getline(in, line)) throw std::runtime_error("record load: truncated output");
        std::istringstream ls(line);
        TokenId id;
        while (ls >> id) rec.output.push_back(id);
    }
    if (rec.output.size() != n) throw std::runtime_error("record load: output length mismatch");

    n = read_count("mask");
    if (n > 0) {
        if (!std::getline(in, line)) throw std::runtime_error("record load: truncated mask");
        std::istringstream ls(line);
        int bit;
        while (ls >> bit) {
            if (bit != 0 && bit != 1) throw std::runtime_error("record load: mask bit not 0/1");
            rec.mask.push_back(bit);
        }
    }
    if (rec.mask.size() != n) throw std::runtime_error("record load: mask length mismatch");

    n = read_count("audit");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("record load: truncated audit");
        std::istringstream ls(line);
        StepAudit s;
        int hit = 0;
        if (!(ls >> s.entropy >> s.m_soft >> s.tau >> hit))
            throw std::runtime_error("record load: bad audit row");
        s.green_hit = hit != 0;
        rec.per_step.push_back(s);
    }

    {
        if (!std::getline(in, line)) throw std::runtime_error("record load: truncated");
        std::istringstream ls(line);
        std::string got;
        if (!(ls >> got >> rec.fallback_count) || got != "fallbacks")
            throw std::runtime_error("record load: expected fallbacks");
    }

    if (rec.output.size() != rec.mask.size() || rec.output.size() != rec.per_step.size())
        throw std::runtime_error("record load: section lengths disagree");
    return rec;
}

} // namespace ltw
