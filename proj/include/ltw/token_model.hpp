#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltw/partition.hpp"
#include "ltw/rng.hpp"

namespace ltw {

using TokenId = std::int32_t;
using LogitVector = std::vector<double>;

// Multinomial sampling controls: top-k truncation, nucleus truncation and the
// no-repeat n-gram filter, applied in that order.
struct SamplerConfig {
    int top_k = 100;
    double top_p = 0.95;
    int no_repeat_ngram = 8;
    double temperature = 1.0;
};

// Order-n n-gram language model with Laplace smoothing. The context length is
// `order`; conditionals are strictly positive and sum to 1 for every context.
// Immutable after fit; all read paths are safe to call concurrently.
class TokenModel {
public:
    static constexpr TokenId kBos = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kUnk = 2;

    struct ContextCounts {
        std::uint64_t total = 0;
        // sorted by token id
        std::vector<std::pair<TokenId, std::uint32_t>> items;
    };

    int order() const { return order_; }
    double alpha() const { return alpha_; }
    std::size_t vocab_size() const { return vocab_.size(); }
    const std::vector<std::string>& vocab() const { return vocab_; }

    const std::string& token_string(TokenId id) const { return vocab_[static_cast<std::size_t>(id)]; }
    TokenId token_id(const std::string& token) const;
    std::vector<TokenId> ids_of(const std::vector<std::string>& tokens) const;

    // ln P(v | last `order` ids of context) for every v. Contexts shorter
    // than the order are padded with BOS on the left.
    LogitVector logits(std::span<const TokenId> context) const;

    // P(token | context), same smoothing as logits.
    double prob(std::span<const TokenId> context, TokenId token) const;

    // exp(mean NLL) of the token sequence under this model.
    double perplexity(std::span<const TokenId> tokens) const;

    // Laplace-smoothed marginal distribution over next-token events; used by
    // the substitution attack.
    std::vector<double> unigram_probs() const;

    std::string to_text() const;
    static TokenModel from_text(const std::string& text);

    friend TokenModel fit_ngram(const std::vector<std::vector<std::string>>& docs, int order,
                                double alpha, std::size_t vocab_cap);

private:
    std::uint64_t pack_context(std::span<const TokenId> ctx) const;

    int order_ = 2;
    double alpha_ = 0.1;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, TokenId> token_ids_;
    std::unordered_map<std::uint64_t, ContextCounts> counts_;
    std::vector<std::uint64_t> unigram_counts_;
    std::uint64_t total_events_ = 0;

    void rebuild_index();
    const ContextCounts* lookup(std::span<const TokenId> context) const;
};

// Whitespace word-level tokenization, lowercased.
std::vector<std::string> tokenize_words(const std::string& text);

// Fit over tokenized documents. The vocabulary keeps the `vocab_cap` most
// frequent words plus BOS/EOS/UNK; every document is padded with `order` BOS
// tokens and a trailing EOS before counting. Throws std::invalid_argument on
// an empty corpus.
TokenModel fit_ngram(const std::vector<std::vector<std::string>>& docs, int order, double alpha,
                     std::size_t vocab_cap);

// Convenience: one document per non-empty line.
TokenModel fit_ngram_text(const std::string& corpus, int order, double alpha,
                          std::size_t vocab_cap);

// Numerically stable softmax with temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

// Natural-log Shannon entropy; 0 * log 0 counts as 0.
double entropy(std::span<const double> probs);

// Additive logit bias: out[v] = logits[v] + delta * m_wm * green[v].
LogitVector apply_bias(const LogitVector& logits, const GreenMask& mask, double delta,
                       double m_wm);

// Draw one token: top-k, then top-p, then the no-repeat n-gram filter, then a
// multinomial draw over the renormalized survivors (CDF in ascending token-id
// order). If the no-repeat filter empties the candidate set, falls back to
// the unfiltered top-k/top-p set and sets *used_fallback.
TokenId sample(std::span<const double> probs, const SamplerConfig& config,
               std::span<const TokenId> history, SplitMix64& rng,
               bool* used_fallback = nullptr);

} // namespace ltw
