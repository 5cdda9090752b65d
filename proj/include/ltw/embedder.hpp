#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltw/partition.hpp"
#include "ltw/token_model.hpp"

namespace ltw {

// Deterministic feature-hash embedder over a window of recent tokens. Each
// (token, position) pair contributes ±1 to one of `dim` buckets; the vector
// is scaled by 1 / sqrt(window length). Windows sharing tokens land nearby,
// disjoint windows are near-orthogonal in expectation.

inline constexpr std::size_t kEmbedDim = 64;
inline constexpr std::size_t kEmbedWindow = 6;

// Bucket and sign of the feature for token t at window position j.
std::size_t feature_bucket(TokenId token, std::size_t pos, std::size_t dim);
double feature_sign(TokenId token, std::size_t pos);

// Embed the last-k window. Empty windows yield the zero vector.
std::vector<double> embed_window(std::span<const TokenId> tokens, std::size_t vocab_size,
                                 std::size_t dim);

// a.b / (|a| |b|); throws std::invalid_argument on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Single-token feature phi(v) = embed_window([v]): one ±1 entry.
std::vector<double> token_feature(TokenId token, std::size_t dim);

// sum_v probs[v] * phi(v); linear in probs.
std::vector<double> prob_feature_sum(std::span<const double> probs, std::size_t dim);

// Same sum restricted to green tokens.
std::vector<double> prob_feature_sum_masked(std::span<const double> probs, const GreenMask& mask,
                                            std::size_t dim);

// Differentiable surrogate for the embedding of a sampled sequence: mean over
// steps of sum_v probs[v] * phi(v). Throws std::invalid_argument when empty.
std::vector<double> expected_embedding(const std::vector<std::vector<double>>& step_probs,
                                       std::size_t vocab_size, std::size_t dim);

} // namespace ltw
