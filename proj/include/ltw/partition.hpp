#pragma once

#include <cstdint>
#include <vector>

namespace ltw {

// Seeding scheme for the green/red vocabulary split. ContextHash re-seeds
// from the previous token at every step (KGW-style); FixedKey uses one
// partition for the whole generation (Unigram-style).
struct HashScheme {
    enum class Kind { ContextHash, FixedKey };
    Kind kind = Kind::ContextHash;
    std::uint64_t key = 0;

    static HashScheme context_hash(std::uint64_t key) {
        return HashScheme{Kind::ContextHash, key};
    }
    static HashScheme fixed_key(std::uint64_t key) {
        return HashScheme{Kind::FixedKey, key};
    }
};

// Binary partition of the vocabulary. bits[v] is true iff token v is green.
struct GreenMask {
    std::vector<bool> bits;
    std::size_t green_count = 0;

    bool is_green(std::int32_t token) const { return bits[static_cast<std::size_t>(token)]; }
    std::size_t vocab_size() const { return bits.size(); }
};

// Per-step seed for the partition. ContextHash mixes the key with the
// previous token id (offset by 1 so id 0 does not null the XOR); FixedKey
// returns the key unchanged.
std::uint64_t derive_seed(const HashScheme& scheme, std::int32_t prev_token);

// Partition the vocabulary: Fisher-Yates permutation of [0, vocab_size)
// driven by a SplitMix64 stream, green list = first floor(gamma * vocab_size)
// permuted indices. Throws std::invalid_argument on a degenerate green count.
GreenMask green_mask(std::size_t vocab_size, double gamma, std::uint64_t seed);

} // namespace ltw
