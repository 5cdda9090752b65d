#include "ltw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ltw/embedder.hpp"

namespace ltw {

namespace {

constexpr std::uint64_t kTagTrainRollout = 0x726F6C6CULL;  // per-rollout sampler streams

constexpr double kProbClamp = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Shared body of soft_rollout and replay_losses: when `forced` is non-null
// the continuation is read from it instead of sampled, and `ratios` (same
// length) overrides the running soft-mask mean.
TrainRollout rollout_core(const TokenModel& model, const SelectorParams& selector,
                          const HashScheme& scheme, double gamma, double delta,
                          const SamplerConfig& sampler, std::span<const TokenId> prompt,
                          std::size_t max_len, SplitMix64* rng,
                          std::span<const TokenId> forced, std::span<const double> ratios) {
    if (prompt.empty()) throw std::invalid_argument("rollout: prompt must be non-empty");
    if (max_len == 0) throw std::invalid_argument("rollout: max_len must be >= 1");
    if (delta < 0.0) throw std::invalid_argument("rollout: delta must be >= 0");

    const std::size_t vocab = model.vocab_size();
    const std::size_t dim = selector.dim;

    TrainRollout out;
    out.prompt.assign(prompt.begin(), prompt.end());
    out.gamma = gamma;
    out.delta = delta;

    std::vector<TokenId> seq(prompt.begin(), prompt.end());
    std::vector<double> acc_w(dim, 0.0), acc_s(dim, 0.0);
    std::vector<double> p_wm(vocab);
    double m_sum = 0.0;

    std::uint64_t mask_seed = 0;
    bool mask_valid = false;
    GreenMask mask;

    for (std::size_t step = 0; step < max_len; ++step) {
        const auto logits = model.logits(seq);
        const auto p_nat = softmax(logits);
        const double e = entropy(p_nat);
        const double r =
            forced.empty()
                ? (step == 0 ? 0.0 : m_sum / static_cast<double>(step))
                : ratios[step];

        const std::size_t k = std::min(seq.size(), kEmbedWindow);
        const auto emb = embed_window(std::span<const TokenId>(seq).last(k), vocab, dim);

        RolloutStep rs;
        rs.m = selector_forward(selector, emb, e, r, rs.cache);
        if (!std::isfinite(rs.m)) {
            throw std::runtime_error("soft_rollout: selector produced a non-finite mask");
        }
        rs.e = e;
        rs.r = r;

        const std::uint64_t seed = derive_seed(scheme, seq.back());
        if (!mask_valid || seed != mask_seed) {
            mask = green_mask(vocab, gamma, seed);
            mask_seed = seed;
            mask_valid = true;
        }

        // modified softmax: green logits lifted by delta * m
        const double bump = delta * rs.m;
        double max_l = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < vocab; ++v) {
            const double l = logits[v] + (mask.bits[v] ? bump : 0.0);
            p_wm[v] = l;
            max_l = std::max(max_l, l);
        }
        double zsum = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
            p_wm[v] = std::exp(p_wm[v] - max_l);
            zsum += p_wm[v];
        }
        double p_gr = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
            p_wm[v] /= zsum;
            if (mask.bits[v]) p_gr += p_wm[v];
        }
        rs.p_gr = p_gr;
        rs.dpgr_dm = delta * p_gr * (1.0 - p_gr);

        const auto u_t = prob_feature_sum(p_wm, dim);
        const auto s_g = prob_feature_sum_masked(p_wm, mask, dim);
        rs.dew_dm.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            rs.dew_dm[i] = delta * (s_g[i] - p_gr * u_t[i]);
            acc_w[i] += u_t[i];
        }
        const auto u_nat = prob_feature_sum(p_nat, dim);
        for (std::size_t i = 0; i < dim; ++i) acc_s[i] += u_nat[i];

        TokenId tok;
        if (forced.empty()) {
            tok = sampler.temperature == 1.0
                      ? sample(p_wm, sampler, seq, *rng)
                      : [&] {
                            std::vector<double> p_t(vocab);
                            for (std::size_t v = 0; v < vocab; ++v)
                                p_t[v] = logits[v] + (mask.bits[v] ? bump : 0.0);
                            auto scaled = softmax(p_t, sampler.temperature);
                            return sample(scaled, sampler, seq, *rng);
                        }();
        } else {
            tok = forced[step];
            if (tok < 0 || static_cast<std::size_t>(tok) >= vocab)
                throw std::invalid_argument("rollout: forced token out of range");
        }

        m_sum += rs.m;
        out.tokens.push_back(tok);
        out.steps.push_back(std::move(rs));
        seq.push_back(tok);
        if (forced.empty() && tok == TokenModel::kEos) break;
    }

    const double inv = 1.0 / static_cast<double>(out.steps.size());
    out.e_w.resize(dim);
    out.e_s.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        out.e_w[i] = acc_w[i] * inv;
        out.e_s[i] = acc_s[i] * inv;
    }
    return out;
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

} // namespace

double ratio_target(RatioTarget kind, double r) {
    switch (kind) {
    case RatioTarget::OneMinusR: return 1.0 - r;
    case RatioTarget::Sigmoid: return sigmoid(-4.0 * (r - 0.5));
    }
    throw std::invalid_argument("ratio_target: unknown kind");
}

TrainRollout soft_rollout(const TokenModel& model, const SelectorParams& selector,
                          const HashScheme& scheme, double gamma, double delta,
                          const SamplerConfig& sampler, std::span<const TokenId> prompt,
                          std::size_t max_len, SplitMix64& rng) {
    return rollout_core(model, selector, scheme, gamma, delta, sampler, prompt, max_len, &rng,
                        {}, {});
}

TrainRollout replay_losses(const TokenModel& model, const SelectorParams& selector,
                           const HashScheme& scheme, double gamma, double delta,
                           std::span<const TokenId> prompt, std::span<const TokenId> tokens,
                           std::span<const double> ratios) {
    if (tokens.empty()) throw std::invalid_argument("replay: empty continuation");
    if (tokens.size() != ratios.size())
        throw std::invalid_argument("replay: tokens/ratios length mismatch");
    SamplerConfig unused;
    return rollout_core(model, selector, scheme, gamma, delta, unused, prompt, tokens.size(),
                        nullptr, tokens, ratios);
}

double loss_similarity(std::span<const double> e_w, std::span<const double> e_s) {
    return -cosine_similarity(e_w, e_s);
}

double loss_entropy(std::span<const double> m_wm, std::span<const double> e, double lambda_e,
                    double mu_e) {
    if (m_wm.size() != e.size())
        throw std::invalid_argument("loss_entropy: length mismatch");
    if (m_wm.empty()) throw std::invalid_argument("loss_entropy: empty rollout");
    double acc = 0.0;
    for (std::size_t t = 0; t < m_wm.size(); ++t) {
        const double p = std::clamp(m_wm[t], kProbClamp, 1.0 - kProbClamp);
        const double q = sigmoid(lambda_e * (e[t] - mu_e));
        acc += -(q * std::log(p) + (1.0 - q) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(m_wm.size());
}

double relaxed_z(std::span<const double> p_gr, std::span<const double> m_wm, double gamma) {
    if (p_gr.size() != m_wm.size()) throw std::invalid_argument("relaxed_z: length mismatch");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("relaxed_z: gamma must lie in (0,1)");
    double a = 0.0, b = 0.0;
    for (std::size_t t = 0; t < m_wm.size(); ++t) {
        a += p_gr[t] * m_wm[t];
        b += m_wm[t];
    }
    if (!(b > 0.0)) throw std::invalid_argument("relaxed_z: all-zero masks");
    return (a - gamma * b) / std::sqrt(gamma * (1.0 - gamma) * b);
}

double loss_ratio(std::span<const double> m_wm, std::span<const double> r, RatioTarget f_kind) {
    if (m_wm.size() != r.size()) throw std::invalid_argument("loss_ratio: length mismatch");
    if (m_wm.empty()) throw std::invalid_argument("loss_ratio: empty rollout");
    double acc = 0.0;
    for (std::size_t t = 0; t < m_wm.size(); ++t) {
        const double d = m_wm[t] - ratio_target(f_kind, r[t]);
        acc += d * d;
    }
    return acc / static_cast<double>(m_wm.size());
}

double loss_output_fix(std::span<const double> m_wm) {
    if (m_wm.empty()) throw std::invalid_argument("loss_output_fix: empty rollout");
    double acc = 0.0;
    for (double m : m_wm) acc += (m - 0.5) * (m - 0.5);
    return -acc / static_cast<double>(m_wm.size());
}

LossBreakdown compose_losses(const TrainRollout& rollout, const LossWeights& weights,
                             RatioTarget f_kind) {
    const std::size_t t_len = rollout.steps.size();
    if (t_len == 0) throw std::invalid_argument("compose_losses: empty rollout");
    std::vector<double> m(t_len), e(t_len), r(t_len), p_gr(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        m[t] = rollout.steps[t].m;
        e[t] = rollout.steps[t].e;
        r[t] = rollout.steps[t].r;
        p_gr[t] = rollout.steps[t].p_gr;
    }
    LossBreakdown lb;
    lb.l_sim = loss_similarity(rollout.e_w, rollout.e_s);
    lb.l_entropy = loss_entropy(m, e, weights.lambda_e, weights.mu_e);
    lb.l_ratio = loss_ratio(m, r, f_kind);
    lb.l_fix = loss_output_fix(m);
    lb.z = relaxed_z(p_gr, m, rollout.gamma);
    lb.l_q = weights.lambda_sim * lb.l_sim + weights.lambda_entropy * lb.l_entropy +
             weights.lambda_fix * lb.l_fix;
    lb.l_d = -weights.lambda_z * lb.z + weights.lambda_wm * lb.l_ratio +
             weights.lambda_fix * lb.l_fix;
    return lb;
}

RolloutGrads rollout_grads(const SelectorParams& selector, const TrainRollout& rollout,
                           const LossWeights& weights, RatioTarget f_kind) {
    const std::size_t t_len = rollout.steps.size();
    if (t_len == 0) throw std::invalid_argument("rollout_grads: empty rollout");
    const double t_inv = 1.0 / static_cast<double>(t_len);

    RolloutGrads out;
    out.losses = compose_losses(rollout, weights, f_kind);
    out.g_q.assign(selector.param_count(), 0.0);
    out.g_d.assign(selector.param_count(), 0.0);

    // cosine gradient w.r.t. E_w, shared across steps
    const auto& a = rollout.e_w;
    const auto& b = rollout.e_s;
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double cosv = dot / (na * nb);
    std::vector<double> dls_dew(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        dls_dew[i] = -(b[i] / (na * nb) - cosv * a[i] / na2);
    }

    // relaxed-z aggregates
    double agg_a = 0.0, agg_b = 0.0;
    for (const auto& s : rollout.steps) {
        agg_a += s.p_gr * s.m;
        agg_b += s.m;
    }
    const double gamma = rollout.gamma;
    const double c = std::sqrt(gamma * (1.0 - gamma));
    const double sqrt_b = std::sqrt(agg_b);

    for (const auto& s : rollout.steps) {
        // dL_sim/dm through this step's share of E_w
        double d_sim = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d_sim += dls_dew[i] * s.dew_dm[i];
        d_sim *= t_inv;

        double d_ent = 0.0;
        if (s.m > kProbClamp && s.m < 1.0 - kProbClamp) {
            const double q = sigmoid(weights.lambda_e * (s.e - weights.mu_e));
            d_ent = (-q / s.m + (1.0 - q) / (1.0 - s.m)) * t_inv;
        }

        const double d_fix = -2.0 * (s.m - 0.5) * t_inv;
        const double d_ratio = 2.0 * (s.m - ratio_target(f_kind, s.r)) * t_inv;
        const double dz = (s.p_gr + s.m * s.dpgr_dm - gamma) / (c * sqrt_b) -
                          (agg_a - gamma * agg_b) / (2.0 * c * agg_b * sqrt_b);

        const double q_scalar = weights.lambda_sim * d_sim + weights.lambda_entropy * d_ent +
                                weights.lambda_fix * d_fix;
        const double d_scalar = -weights.lambda_z * dz + weights.lambda_wm * d_ratio +
                                weights.lambda_fix * d_fix;

        const auto g = selector_backward(selector, s.cache, 1.0);
        for (std::size_t i = 0; i < g.theta.size(); ++i) {
            out.g_q[i] += q_scalar * g.theta[i];
            out.g_d[i] += d_scalar * g.theta[i];
        }
    }
    return out;
}

double mgda_lambda(std::span<const double> g_q, std::span<const double> g_d) {
    if (g_q.size() != g_d.size() || g_q.empty())
        throw std::invalid_argument("mgda_lambda: gradient shape mismatch");
    double dq = 0.0, dd = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < g_q.size(); ++i) {
        if (!std::isfinite(g_q[i]) || !std::isfinite(g_d[i]))
            throw std::invalid_argument("mgda_lambda: non-finite gradient");
        dq += g_d[i] * g_q[i];
        dd += g_d[i] * g_d[i];
        qq += g_q[i] * g_q[i];
    }
    if (dq >= dd) return 1.0;
    if (dq >= qq) return 0.0;
    double denom = 0.0;
    for (std::size_t i = 0; i < g_q.size(); ++i) {
        const double diff = g_d[i] - g_q[i];
        denom += diff * diff;
    }
    return (qq - dq) / denom;
}

std::vector<double> mgda_direction(std::span<const double> g_q, std::span<const double> g_d,
                                   double lambda_star) {
    std::vector<double> g(g_q.size());
    for (std::size_t i = 0; i < g_q.size(); ++i) {
        g[i] = lambda_star * g_d[i] + (1.0 - lambda_star) * g_q[i];
    }
    return g;
}

void adam_step(SelectorParams& params, std::span<const double> grad, OptState& opt) {
    const std::size_t n = params.theta.size();
    if (grad.size() != n) throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (opt.m.empty()) {
        opt.m.assign(n, 0.0);
        opt.v.assign(n, 0.0);
    }
    if (opt.m.size() != n) throw std::invalid_argument("adam_step: state shape mismatch");

    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < n; ++i) {
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grad[i];
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        const double m_hat = opt.m[i] / bc1;
        const double v_hat = opt.v[i] / bc2;
        params.theta[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
    params.revision += 1;
}

TrainResult train_epoch(const TokenModel& model, SelectorParams selector,
                        const std::vector<std::vector<TokenId>>& prompts,
                        const TrainConfig& config) {
    if (prompts.empty()) throw std::invalid_argument("train_epoch: no prompts");
    if (config.batch == 0) throw std::invalid_argument("train_epoch: batch must be >= 1");

    TrainResult result;
    OptState opt;
    opt.lr = config.lr;

    std::size_t opt_step = 0;
    std::size_t rollout_index = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t start = 0; start < prompts.size(); start += config.batch) {
            const std::size_t stop = std::min(start + config.batch, prompts.size());
            const double inv = 1.0 / static_cast<double>(stop - start);

            std::vector<double> g_q(selector.param_count(), 0.0);
            std::vector<double> g_d(selector.param_count(), 0.0);
            double l_q = 0.0, l_d = 0.0, z_mean = 0.0;

            try {
                for (std::size_t i = start; i < stop; ++i, ++rollout_index) {
                    SplitMix64 rng(
                        derive_substream(config.seed, kTagTrainRollout, rollout_index));
                    auto rollout =
                        soft_rollout(model, selector, config.scheme, config.gamma,
                                     config.delta, config.sampler, prompts[i],
                                     config.max_len, rng);
                    auto grads = rollout_grads(selector, rollout, config.weights,
                                               config.ratio_target);
                    for (std::size_t j = 0; j < g_q.size(); ++j) {
                        g_q[j] += grads.g_q[j] * inv;
                        g_d[j] += grads.g_d[j] * inv;
                    }
                    l_q += grads.losses.l_q * inv;
                    l_d += grads.losses.l_d * inv;
                    z_mean += grads.losses.z * inv;
                }
            } catch (const std::runtime_error&) {
                // a rollout that blows up numerically is a divergence, not a
                // caller error; hand back the last parameters that worked
                throw TrainingDiverged("train_epoch: rollout diverged at step " +
                                           std::to_string(opt_step + 1),
                                       std::move(selector), opt_step);
            }

            if (!std::isfinite(l_q) || !std::isfinite(l_d) || !all_finite(g_q) ||
                !all_finite(g_d)) {
                throw TrainingDiverged("train_epoch: non-finite loss or gradient at step " +
                                           std::to_string(opt_step + 1),
                                       std::move(selector), opt_step);
            }

            // a gradient that is identically zero means that objective is
            // locally constant; descend the other one instead of letting the
            // min-norm combination collapse to the zero vector
            double qq = 0.0, dd = 0.0;
            for (std::size_t j = 0; j < g_q.size(); ++j) {
                qq += g_q[j] * g_q[j];
                dd += g_d[j] * g_d[j];
            }
            double lambda_star;
            if (qq == 0.0 && dd > 0.0) {
                lambda_star = 1.0;
            } else if (dd == 0.0 && qq > 0.0) {
                lambda_star = 0.0;
            } else {
                lambda_star = mgda_lambda(g_q, g_d);
            }
            const auto g = mgda_direction(g_q, g_d, lambda_star);
            adam_step(selector, g, opt);
            ++opt_step;

            result.history.push_back({opt_step, l_q, l_d, z_mean, lambda_star, 0});
            if (config.checkpoint_sink && config.checkpoint_every > 0 &&
                opt_step % config.checkpoint_every == 0) {
                config.checkpoint_sink(opt_step, selector);
            }
        }
    }
    result.params = std::move(selector);
    return result;
}

std::string history_to_csv(const std::vector<TrainStepLog>& history) {
    std::ostringstream out;
    out << "step,L_Q,L_D,z_mean,lambda_star,wall_ms\n";
    for (const auto& row : history) {
        out << row.step << "," << fmt_double(row.l_q) << "," << fmt_double(row.l_d) << ","
            << fmt_double(row.z_mean) << "," << fmt_double(row.lambda_star) << "," << row.wall_ms
            << "\n";
    }
    return out.str();
}

} // namespace ltw
