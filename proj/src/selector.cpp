#include "ltw/selector.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ltw/rng.hpp"

namespace ltw {

namespace {

constexpr double kLeakySlope = 0.01;

double lrelu(double z) { return z > 0.0 ? z : kLeakySlope * z; }
double lrelu_grad(double z) { return z > 0.0 ? 1.0 : kLeakySlope; }

// out = W x + b, W row-major rows x cols
void affine(std::span<const double> theta, std::size_t w_off, std::size_t b_off,
            std::size_t rows, std::size_t cols, std::span<const double> x,
            std::vector<double>& out) {
    out.assign(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = theta[b_off + i];
        const std::size_t row = w_off + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += theta[row + j] * x[j];
        out[i] = acc;
    }
}

void xavier_fill(std::vector<double>& theta, std::size_t off, std::size_t rows, std::size_t cols,
                 SplitMix64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < rows * cols; ++i) {
        theta[off + i] = (2.0 * rng.next_double() - 1.0) * bound;
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

SelectorParams selector_init(std::size_t dim, std::size_t h1, std::size_t h2, std::size_t h3,
                             std::uint64_t seed) {
    if (dim == 0 || h1 == 0 || h2 == 0 || h3 == 0)
        throw std::invalid_argument("selector_init: layer sizes must be positive");
    SelectorParams p;
    p.dim = dim;
    p.h1 = h1;
    p.h2 = h2;
    p.h3 = h3;
    p.theta.assign(p.param_count(), 0.0);
    SplitMix64 rng(seed);
    xavier_fill(p.theta, p.off_w1(), h1, dim, rng);
    xavier_fill(p.theta, p.off_w2(), h2, h1, rng);
    xavier_fill(p.theta, p.off_w3(), h3, h2 + 2, rng);
    xavier_fill(p.theta, p.off_w4(), 1, h3, rng);
    return p;
}

double selector_forward(const SelectorParams& params, std::span<const double> embedding,
                        double e, double r, SelectorCache& cache) {
    if (embedding.size() != params.dim)
        throw std::invalid_argument("selector_forward: embedding dim mismatch");
    if (!(e >= 0.0) || !std::isfinite(e))
        throw std::invalid_argument("selector_forward: entropy must be finite and >= 0");
    if (!(r >= 0.0 && r <= 1.0))
        throw std::invalid_argument("selector_forward: ratio must lie in [0,1]");
    for (double v : embedding) {
        if (!std::isfinite(v))
            throw std::invalid_argument("selector_forward: non-finite embedding");
    }

    cache.x.assign(embedding.begin(), embedding.end());
    cache.e = e;
    cache.r = r;

    affine(params.theta, params.off_w1(), params.off_b1(), params.h1, params.dim, cache.x,
           cache.z1);
    cache.a1.resize(params.h1);
    for (std::size_t i = 0; i < params.h1; ++i) cache.a1[i] = lrelu(cache.z1[i]);

    affine(params.theta, params.off_w2(), params.off_b2(), params.h2, params.h1, cache.a1,
           cache.z2);
    cache.a2.resize(params.h2);
    for (std::size_t i = 0; i < params.h2; ++i) cache.a2[i] = lrelu(cache.z2[i]);

    cache.u = cache.a2;
    cache.u.push_back(e);
    cache.u.push_back(r);

    affine(params.theta, params.off_w3(), params.off_b3(), params.h3, params.h2 + 2, cache.u,
           cache.z3);
    cache.a3.resize(params.h3);
    for (std::size_t i = 0; i < params.h3; ++i) cache.a3[i] = lrelu(cache.z3[i]);

    double z4 = params.theta[params.off_b4()];
    for (std::size_t j = 0; j < params.h3; ++j)
        z4 += params.theta[params.off_w4() + j] * cache.a3[j];
    cache.z4 = z4;
    cache.m = 1.0 / (1.0 + std::exp(-z4));
    cache.revision = params.revision;
    return cache.m;
}

SelectorGrad selector_backward(const SelectorParams& params, const SelectorCache& cache,
                               double d_out) {
    if (cache.revision != params.revision)
        throw std::runtime_error("selector_backward: cache is stale, rerun forward");
    if (cache.x.size() != params.dim || cache.a3.size() != params.h3)
        throw std::runtime_error("selector_backward: cache shape mismatch");

    SelectorGrad g;
    g.theta.assign(params.param_count(), 0.0);
    g.d_embedding.assign(params.dim, 0.0);
    if (d_out == 0.0) return g;

    const double g4 = d_out * cache.m * (1.0 - cache.m);
    g.theta[params.off_b4()] = g4;
    std::vector<double> da3(params.h3);
    for (std::size_t j = 0; j < params.h3; ++j) {
        g.theta[params.off_w4() + j] = g4 * cache.a3[j];
        da3[j] = params.theta[params.off_w4() + j] * g4;
    }

    std::vector<double> dz3(params.h3);
    for (std::size_t i = 0; i < params.h3; ++i) dz3[i] = da3[i] * lrelu_grad(cache.z3[i]);
    const std::size_t ucols = params.h2 + 2;
    std::vector<double> du(ucols, 0.0);
    for (std::size_t i = 0; i < params.h3; ++i) {
        g.theta[params.off_b3() + i] = dz3[i];
        const std::size_t row = params.off_w3() + i * ucols;
        for (std::size_t j = 0; j < ucols; ++j) {
            g.theta[row + j] = dz3[i] * cache.u[j];
            du[j] += params.theta[row + j] * dz3[i];
        }
    }
    g.d_entropy = du[params.h2];
    g.d_ratio = du[params.h2 + 1];

    std::vector<double> dz2(params.h2);
    for (std::size_t i = 0; i < params.h2; ++i) dz2[i] = du[i] * lrelu_grad(cache.z2[i]);
    std::vector<double> da1(params.h1, 0.0);
    for (std::size_t i = 0; i < params.h2; ++i) {
        g.theta[params.off_b2() + i] = dz2[i];
        const std::size_t row = params.off_w2() + i * params.h1;
        for (std::size_t j = 0; j < params.h1; ++j) {
            g.theta[row + j] = dz2[i] * cache.a1[j];
            da1[j] += params.theta[row + j] * dz2[i];
        }
    }

    std::vector<double> dz1(params.h1);
    for (std::size_t i = 0; i < params.h1; ++i) dz1[i] = da1[i] * lrelu_grad(cache.z1[i]);
    for (std::size_t i = 0; i < params.h1; ++i) {
        g.theta[params.off_b1() + i] = dz1[i];
        const std::size_t row = params.off_w1() + i * params.dim;
        for (std::size_t j = 0; j < params.dim; ++j) {
            g.theta[row + j] = dz1[i] * cache.x[j];
            g.d_embedding[j] += params.theta[row + j] * dz1[i];
        }
    }
    return g;
}

double adaptive_threshold(const ThresholdPolicy& policy, double r) {
    if (!(policy.tau_low <= policy.tau_mid && policy.tau_mid <= policy.tau_high))
        throw std::invalid_argument("adaptive_threshold: thresholds out of order");
    if (!(policy.low_band < policy.high_band))
        throw std::invalid_argument("adaptive_threshold: bands out of order");
    if (!(r >= 0.0 && r <= 1.0))
        throw std::invalid_argument("adaptive_threshold: ratio must lie in [0,1]");
    if (r < policy.low_band) return policy.tau_low;
    if (r > policy.high_band) return policy.tau_high;
    return policy.tau_mid;
}

std::string selector_save(const SelectorParams& params) {
    std::ostringstream out;
    out << "LTW-SELECTOR v1\n";
    out << params.dim << " " << params.h1 << " " << params.h2 << " " << params.h3 << "\n";
    for (double v : params.theta) out << fmt_double(v) << "\n";
    return out.str();
}

SelectorParams selector_load(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "LTW-SELECTOR v1")
        throw std::runtime_error("selector load: bad header");
    SelectorParams p;
    {
        if (!std::getline(in, line)) throw std::runtime_error("selector load: missing dims");
        std::istringstream ls(line);
        if (!(ls >> p.dim >> p.h1 >> p.h2 >> p.h3))
            throw std::runtime_error("selector load: bad dims line");
        if (p.dim == 0 || p.h1 == 0 || p.h2 == 0 || p.h3 == 0)
            throw std::runtime_error("selector load: zero dimension");
    }
    p.theta.reserve(p.param_count());
    for (std::size_t i = 0; i < p.param_count(); ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("selector load: truncated weights");
        p.theta.push_back(std::strtod(line.c_str(), nullptr));
    }
    return p;
}

} // namespace ltw
