#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ltw {

// Two-stage MLP scoring each generation step: a reduction stack over the
// window embedding, then a head over [reduced; entropy; ratio], sigmoid out.
// Parameters live in one flat vector (matrices row-major, layer order
// W1 b1 W2 b2 W3 b3 W4 b4) so the optimizer and serializer share a layout.
struct SelectorParams {
    std::size_t dim = 64;
    std::size_t h1 = 32;
    std::size_t h2 = 8;
    std::size_t h3 = 8;
    std::vector<double> theta;
    // bumped on every in-place mutation; forward caches record the value they
    // were computed under so a stale backward is caught instead of silently
    // producing wrong gradients
    std::uint64_t revision = 0;

    std::size_t off_w1() const { return 0; }
    std::size_t off_b1() const { return h1 * dim; }
    std::size_t off_w2() const { return off_b1() + h1; }
    std::size_t off_b2() const { return off_w2() + h2 * h1; }
    std::size_t off_w3() const { return off_b2() + h2; }
    std::size_t off_b3() const { return off_w3() + h3 * (h2 + 2); }
    std::size_t off_w4() const { return off_b3() + h3; }
    std::size_t off_b4() const { return off_w4() + h3; }
    std::size_t param_count() const { return off_b4() + 1; }
};

// Pre-activations and inputs retained by forward for the exact backward pass.
struct SelectorCache {
    std::vector<double> x;   // embedding input
    double e = 0.0;
    double r = 0.0;
    std::vector<double> z1, a1, z2, a2, u, z3, a3;
    double z4 = 0.0;
    double m = 0.0;
    std::uint64_t revision = 0;
};

struct SelectorGrad {
    std::vector<double> theta;        // same layout as SelectorParams::theta
    std::vector<double> d_embedding;  // gradient w.r.t. the input embedding
    double d_entropy = 0.0;
    double d_ratio = 0.0;
};

// Three-level inference threshold keyed on the running watermarked ratio.
struct ThresholdPolicy {
    double tau_low = 0.40;
    double tau_mid = 0.50;
    double tau_high = 0.60;
    double low_band = 0.35;
    double high_band = 0.65;
};

// Xavier-uniform weights from a seeded stream, zero biases.
SelectorParams selector_init(std::size_t dim, std::size_t h1, std::size_t h2, std::size_t h3,
                             std::uint64_t seed);

// m = sigmoid(head([reduce(embedding); e; r])). LeakyReLU slope 0.01.
double selector_forward(const SelectorParams& params, std::span<const double> embedding,
                        double e, double r, SelectorCache& cache);

// Exact reverse-mode gradients of d_out * m w.r.t. every parameter and the
// three inputs. Throws if the cache predates a parameter mutation.
SelectorGrad selector_backward(const SelectorParams& params, const SelectorCache& cache,
                               double d_out);

double adaptive_threshold(const ThresholdPolicy& policy, double r);

// Inference-time mask bit; strict inequality.
inline int harden(double m_wm, double tau) { return m_wm > tau ? 1 : 0; }

std::string selector_save(const SelectorParams& params);
SelectorParams selector_load(const std::string& text);

} // namespace ltw
