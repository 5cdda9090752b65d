#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltw/partition.hpp"
#include "ltw/selector.hpp"
#include "ltw/token_model.hpp"

namespace ltw {

struct LossWeights {
    double lambda_sim = 1.0;
    double lambda_entropy = 1.0;
    double lambda_fix = 1.0;
    double lambda_z = 0.05;
    double lambda_wm = 1.0;
    // entropy-target shape: target = sigmoid(lambda_e * (e - mu_e))
    double lambda_e = 2.0;
    double mu_e = 1.2;
};

// Monotone-decreasing mask target f(r) for the ratio loss.
enum class RatioTarget { OneMinusR, Sigmoid };

double ratio_target(RatioTarget kind, double r);

// One soft-rollout step. dew_dm is the gradient of this step's expected
// feature mix w.r.t. the soft mask; dpgr_dm the green-mass derivative. Both
// close over the modified softmax, so backprop only needs per-step scalars
// plus one dim-vector.
struct RolloutStep {
    double m = 0.0;
    double e = 0.0;
    double r = 0.0;      // detached: treated as a constant during backprop
    double p_gr = 0.0;   // green mass of the modified softmax
    double dpgr_dm = 0.0;
    std::vector<double> dew_dm;
    SelectorCache cache;
};

struct TrainRollout {
    std::vector<TokenId> prompt;
    std::vector<TokenId> tokens;  // sampled (or replayed) continuation
    std::vector<RolloutStep> steps;
    std::vector<double> e_w;  // expected embedding along the biased path
    std::vector<double> e_s;  // expected embedding along the delta=0 path
    double gamma = 0.25;      // partition fraction the rollout was produced under
    double delta = 0.0;
};

struct LossBreakdown {
    double l_q = 0.0;
    double l_d = 0.0;
    double l_sim = 0.0;
    double l_entropy = 0.0;
    double l_ratio = 0.0;
    double l_fix = 0.0;
    double z = 0.0;
};

struct RolloutGrads {
    std::vector<double> g_q;  // d L_Q / d theta
    std::vector<double> g_d;  // d L_D / d theta
    LossBreakdown losses;
};

// Continuous-mask generation: the bias is delta * m_wm (no hardening), the
// sampled token advances the sequence, and the ratio input is the mean of
// prior soft masks. Records everything backprop needs.
TrainRollout soft_rollout(const TokenModel& model, const SelectorParams& selector,
                          const HashScheme& scheme, double gamma, double delta,
                          const SamplerConfig& sampler, std::span<const TokenId> prompt,
                          std::size_t max_len, SplitMix64& rng);

// Teacher-forced rerun over a fixed token continuation and a fixed ratio
// sequence. With the parameters of the original rollout it reproduces its
// losses exactly; with perturbed parameters it is the finite-difference
// objective matching what rollout_grads differentiates (ratios detached,
// tokens fixed).
TrainRollout replay_losses(const TokenModel& model, const SelectorParams& selector,
                           const HashScheme& scheme, double gamma, double delta,
                           std::span<const TokenId> prompt, std::span<const TokenId> tokens,
                           std::span<const double> ratios);

double loss_similarity(std::span<const double> e_w, std::span<const double> e_s);
double loss_entropy(std::span<const double> m_wm, std::span<const double> e, double lambda_e,
                    double mu_e);
double relaxed_z(std::span<const double> p_gr, std::span<const double> m_wm, double gamma);
double loss_ratio(std::span<const double> m_wm, std::span<const double> r, RatioTarget f_kind);
double loss_output_fix(std::span<const double> m_wm);

LossBreakdown compose_losses(const TrainRollout& rollout, const LossWeights& weights,
                             RatioTarget f_kind = RatioTarget::OneMinusR);

// Exact gradients of both composite losses over the selector parameters:
// one selector backward per step, scaled by the two per-step loss scalars.
RolloutGrads rollout_grads(const SelectorParams& selector, const TrainRollout& rollout,
                           const LossWeights& weights,
                           RatioTarget f_kind = RatioTarget::OneMinusR);

// Closed-form min-norm coefficient for two objectives; the combined
// direction is lambda* g_d + (1 - lambda*) g_q.
double mgda_lambda(std::span<const double> g_q, std::span<const double> g_d);
std::vector<double> mgda_direction(std::span<const double> g_q, std::span<const double> g_d,
                                   double lambda_star);

struct OptState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam update in place; bumps the parameter revision.
void adam_step(SelectorParams& params, std::span<const double> grad, OptState& opt);

struct TrainConfig {
    HashScheme scheme = HashScheme::context_hash(15485863);
    double gamma = 0.25;
    double delta = 3.0;
    SamplerConfig sampler;
    LossWeights weights;
    RatioTarget ratio_target = RatioTarget::OneMinusR;
    double lr = 1e-4;
    std::size_t batch = 5;
    std::size_t max_len = 75;
    std::size_t epochs = 1;
    std::uint64_t seed = 15485863;
    std::size_t checkpoint_every = 200;
    // called after each checkpoint_every-th optimizer step
    std::function<void(std::size_t, const SelectorParams&)> checkpoint_sink;
};

struct TrainStepLog {
    std::size_t step = 0;
    double l_q = 0.0;
    double l_d = 0.0;
    double z_mean = 0.0;
    double lambda_star = 0.0;
    std::uint64_t wall_ms = 0;  // kept in the log schema; written as 0 for replayability
};

struct TrainResult {
    SelectorParams params;
    std::vector<TrainStepLog> history;
};

// Thrown when a batch produces a non-finite loss or gradient; carries the
// last parameters known to be finite so callers can checkpoint them.
struct TrainingDiverged : std::runtime_error {
    SelectorParams last_good;
    std::size_t at_step;

    TrainingDiverged(std::string msg, SelectorParams params, std::size_t step)
        : std::runtime_error(std::move(msg)), last_good(std::move(params)), at_step(step) {}
};

// One (or config.epochs) passes over the prompts in batches: average the two
// loss gradients across the batch, combine via mgda_lambda, take one Adam
// step. History holds one row per optimizer step.
TrainResult train_epoch(const TokenModel& model, SelectorParams selector,
                        const std::vector<std::vector<TokenId>>& prompts,
                        const TrainConfig& config);

std::string history_to_csv(const std::vector<TrainStepLog>& history);

} // namespace ltw
