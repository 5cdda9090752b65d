#include "ltw/embedder.hpp"

#include <cmath>
#include <stdexcept>

#include "ltw/rng.hpp"

namespace ltw {

namespace {

constexpr std::uint64_t kBucketSalt = 0xA0761D6478BD642FULL;
constexpr std::uint64_t kSignSalt = 0xE7037ED1A0B428DBULL;

std::uint64_t feature_hash(std::uint64_t salt, TokenId token, std::size_t pos) {
    return mix64(salt ^ (static_cast<std::uint64_t>(pos) << 32) ^
                 static_cast<std::uint64_t>(token));
}

} // namespace

std::size_t feature_bucket(TokenId token, std::size_t pos, std::size_t dim) {
    return static_cast<std::size_t>(feature_hash(kBucketSalt, token, pos) % dim);
}

double feature_sign(TokenId token, std::size_t pos) {
    return (feature_hash(kSignSalt, token, pos) & 1u) ? 1.0 : -1.0;
}

std::vector<double> embed_window(std::span<const TokenId> tokens, std::size_t vocab_size,
                                 std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("embed_window: dim must be positive");
    std::vector<double> v(dim, 0.0);
    if (tokens.empty()) return v;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        const TokenId t = tokens[j];
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
            throw std::invalid_argument("embed_window: token id out of range");
        v[feature_bucket(t, j, dim)] += feature_sign(t, j);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(tokens.size()));
    for (double& x : v) x *= scale;
    return v;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> token_feature(TokenId token, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    v[feature_bucket(token, 0, dim)] = feature_sign(token, 0);
    return v;
}

std::vector<double> prob_feature_sum(std::span<const double> probs, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    for (std::size_t t = 0; t < probs.size(); ++t) {
        v[feature_bucket(static_cast<TokenId>(t), 0, dim)] +=
            feature_sign(static_cast<TokenId>(t), 0) * probs[t];
    }
    return v;
}

std::vector<double> prob_feature_sum_masked(std::span<const double> probs, const GreenMask& mask,
                                            std::size_t dim) {
    if (probs.size() != mask.bits.size())
        throw std::invalid_argument("prob_feature_sum_masked: probs/mask size mismatch");
    std::vector<double> v(dim, 0.0);
    for (std::size_t t = 0; t < probs.size(); ++t) {
        if (!mask.bits[t]) continue;
        v[feature_bucket(static_cast<TokenId>(t), 0, dim)] +=
            feature_sign(static_cast<TokenId>(t), 0) * probs[t];
    }
    return v;
}

std::vector<double> expected_embedding(const std::vector<std::vector<double>>& step_probs,
                                       std::size_t vocab_size, std::size_t dim) {
    if (step_probs.empty())
        throw std::invalid_argument("expected_embedding: no steps");
    std::vector<double> acc(dim, 0.0);
    for (const auto& probs : step_probs) {
        if (probs.size() != vocab_size)
            throw std::invalid_argument("expected_embedding: probs size mismatch");
        auto s = prob_feature_sum(probs, dim);
        for (std::size_t i = 0; i < dim; ++i) acc[i] += s[i];
    }
    const double inv = 1.0 / static_cast<double>(step_probs.size());
    for (double& x : acc) x *= inv;
    return acc;
}

} // namespace ltw
