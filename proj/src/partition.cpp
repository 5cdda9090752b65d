#include "ltw/partition.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ltw/rng.hpp"

namespace ltw {

std::uint64_t derive_seed(const HashScheme& scheme, std::int32_t prev_token) {
    if (scheme.kind == HashScheme::Kind::FixedKey) return scheme.key;
    const auto prev = static_cast<std::uint64_t>(prev_token) + 1;
    return mix64(scheme.key ^ prev);
}

GreenMask green_mask(std::size_t vocab_size, double gamma, std::uint64_t seed) {
    if (vocab_size < 2) throw std::invalid_argument("green_mask: vocab_size must be >= 2");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("green_mask: gamma must lie in (0, 1)");
    const auto green = static_cast<std::size_t>(
        std::floor(gamma * static_cast<double>(vocab_size)));
    if (green == 0 || green >= vocab_size)
        throw std::invalid_argument("green_mask: degenerate green count");

    std::vector<std::uint32_t> perm(vocab_size);
    std::iota(perm.begin(), perm.end(), 0u);
    SplitMix64 rng(seed);
    for (std::size_t i = vocab_size - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bounded(i + 1));
        std::swap(perm[i], perm[j]);
    }

    GreenMask mask;
    mask.bits.assign(vocab_size, false);
    mask.green_count = green;
    for (std::size_t i = 0; i < green; ++i) mask.bits[perm[i]] = true;
    return mask;
}

} // namespace ltw
