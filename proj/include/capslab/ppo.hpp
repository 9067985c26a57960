#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "capslab/adam.hpp"
#include "capslab/caps.hpp"
#include "capslab/env.hpp"
#include "capslab/mlp.hpp"
#include "capslab/objectives.hpp"
#include "capslab/rng.hpp"

namespace capslab {

struct PpoConfig {
  std::vector<std::size_t> hidden{64, 64};
  double actor_lr = 3e-4;
  double value_lr = 1e-3;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  std::size_t epochs = 10;
  std::size_t minibatch = 64;
  std::size_t rollout_horizon = 2048;
  double init_log_std = -0.5;
  double grad_clip = 10.0;
  CapsConfig caps;
};

/// On-policy storage for one rollout batch. Advantages are computed once by
/// finalize() and normalized; updates refuse an unfinalized buffer.
struct RolloutBuffer {
  std::vector<Vec> states;
  std::vector<Vec> actions;  // normalized, pre-clamp samples
  std::vector<Vec> next_states;
  Vec log_probs;
  Vec rewards;
  Vec values;
  std::vector<std::uint8_t> dones;
  Vec advantages;
  Vec returns;
  bool finalized = false;

  std::size_t size() const { return states.size(); }

  void clear() {
    states.clear();
    actions.clear();
    next_states.clear();
    log_probs.clear();
    rewards.clear();
    values.clear();
    dones.clear();
    advantages.clear();
    returns.clear();
    finalized = false;
  }
};

/// Generalized advantage estimation over one batch. `bootstrap_value` is
/// V(s_T) for a truncated final step and is ignored when that step ended an
/// episode. Returns come back un-normalized as advantage + value.
inline void gae(const Vec& rewards, const Vec& values, const std::vector<std::uint8_t>& dones,
                double bootstrap_value, double gamma, double lambda, Vec& advantages,
                Vec& returns) {
  const std::size_t T = rewards.size();
  if (T == 0 || values.size() != T || dones.size() != T)
    throw UsageError("gae: batch arrays empty or mismatched");
  advantages.assign(T, 0.0);
  returns.assign(T, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double mask = dones[t] ? 0.0 : 1.0;
    const double v_next = (t + 1 < T) ? values[t + 1] : bootstrap_value;
    const double delta = rewards[t] + gamma * mask * v_next - values[t];
    next_adv = delta + gamma * lambda * mask * next_adv;
    advantages[t] = next_adv;
    returns[t] = advantages[t] + values[t];
  }
}

inline double diag_gaussian_log_prob(const Vec& mean, const Vec& log_std, const Vec& action) {
  if (mean.size() != log_std.size() || mean.size() != action.size())
    throw ShapeError("diag_gaussian_log_prob: dimension mismatch");
  double lp = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    const double sigma = std::exp(log_std[d]);
    const double z = (action[d] - mean[d]) / sigma;
    lp += -0.5 * z * z - log_std[d] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

struct SurrogateGrad {
  double value = 0.0;
  ParamGrads actor_grad;
  Vec log_std_grad;
};

/// Clipped-surrogate objective on one minibatch:
/// (1/B) sum_i min(r_i A_i, clamp(r_i, 1-c, 1+c) A_i) with r_i the
/// probability ratio against the stored log-probs. Gradients go to the mean
/// head and the log-std; ties at the clip boundary take the clipped branch,
/// whose slope vanishes outside the interior.
inline SurrogateGrad ppo_surrogate_objective(const Mlp& actor, const Vec& log_std,
                                             const RolloutBuffer& roll,
                                             std::span<const std::size_t> idx, double clip) {
  if (idx.empty()) throw UsageError("ppo_surrogate_objective: empty minibatch");
  const std::size_t act_dim = actor.output_size();
  SurrogateGrad out;
  out.actor_grad = actor.zero_grads();
  out.log_std_grad.assign(act_dim, 0.0);
  const double inv_b = 1.0 / static_cast<double>(idx.size());

  for (const std::size_t i : idx) {
    GradientTape tape;
    const Vec mean = actor.forward(roll.states[i], tape);
    const double lp = diag_gaussian_log_prob(mean, log_std, roll.actions[i]);
    const double ratio = std::exp(lp - roll.log_probs[i]);
    if (!std::isfinite(ratio)) throw TrainingError("ppo update: non-finite probability ratio");
    const double adv = roll.advantages[i];
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    const double surr1 = ratio * adv;
    const double surr2 = clipped * adv;
    out.value += std::min(surr1, surr2) * inv_b;

    const bool interior = ratio > 1.0 - clip && ratio < 1.0 + clip;
    const double factor = (surr1 < surr2 ? ratio : (interior ? ratio : 0.0)) * adv * inv_b;
    if (factor != 0.0) {
      Vec mean_grad(act_dim);
      for (std::size_t d = 0; d < act_dim; ++d) {
        const double sigma = std::exp(log_std[d]);
        const double z = (roll.actions[i][d] - mean[d]) / sigma;
        mean_grad[d] = factor * z / sigma;
        out.log_std_grad[d] += factor * (z * z - 1.0);
      }
      actor.backward(tape, mean_grad, out.actor_grad);
    }
  }
  return out;
}

/// Keeps an environment's episode position across rollout batches so
/// episodes need not align with the collection horizon.
struct EnvSession {
  Env* env = nullptr;
  std::uint64_t seed_base = 0;
  std::uint64_t episode_counter = 0;
  Vec obs;
  bool needs_reset = true;
};

/// Clipped-surrogate stochastic learner: Tanh mean head plus a trainable
/// state-independent log-std. Smoothness penalties use the mean action and
/// attach to the actor only.
class PpoAgent {
 public:
  PpoAgent(std::size_t obs_dim, std::size_t act_dim, PpoConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)), obs_dim_(obs_dim), act_dim_(act_dim) {
    cfg_.caps.validate();
    std::vector<std::size_t> actor_sizes{obs_dim};
    std::vector<std::size_t> value_sizes{obs_dim};
    for (std::size_t h : cfg_.hidden) {
      actor_sizes.push_back(h);
      value_sizes.push_back(h);
    }
    actor_sizes.push_back(act_dim);
    value_sizes.push_back(1);
    actor_ = Mlp::init(actor_sizes, Activation::Tanh, Activation::Tanh, Rng::derive(seed, 0));
    value_ = Mlp::init(value_sizes, Activation::Tanh, Activation::Identity, Rng::derive(seed, 1));
    log_std_.assign(act_dim, cfg_.init_log_std);
    actor_opt_ = AdamState::for_net(actor_, cfg_.actor_lr);
    value_opt_ = AdamState::for_net(value_, cfg_.value_lr);
    log_std_opt_ = AdamVec(act_dim, cfg_.actor_lr);
  }

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  const PpoConfig& config() const { return cfg_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& value_net() const { return value_; }
  const Vec& log_std() const { return log_std_; }

  Vec mean_action(const Vec& obs) const { return actor_.forward(obs); }

  double log_prob(const Vec& mean, const Vec& action) const {
    return diag_gaussian_log_prob(mean, log_std_, action);
  }

  /// Gathers `horizon` steps under the current stochastic policy, resuming
  /// the session's episode; GAE advantages and returns are folded in.
  RolloutBuffer collect(EnvSession& session, std::size_t horizon, Rng& rng) {
    RolloutBuffer roll;
    const double bound = session.env->action_bound();
    for (std::size_t t = 0; t < horizon; ++t) {
      if (session.needs_reset) {
        session.obs = session.env->reset(Rng::derive(session.seed_base, session.episode_counter));
        ++session.episode_counter;
        session.needs_reset = false;
      }
      const Vec mean = actor_.forward(session.obs);
      Vec action(act_dim_);
      for (std::size_t d = 0; d < act_dim_; ++d)
        action[d] = mean[d] + std::exp(log_std_[d]) * rng.normal();

      Vec native(act_dim_);
      for (std::size_t d = 0; d < act_dim_; ++d)
        native[d] = std::clamp(action[d], -1.0, 1.0) * bound;
      StepResult res = session.env->step(native);

      roll.states.push_back(session.obs);
      roll.actions.push_back(action);
      roll.next_states.push_back(res.obs);
      roll.log_probs.push_back(log_prob(mean, action));
      roll.rewards.push_back(res.reward);
      roll.values.push_back(value_.forward(session.obs)[0]);
      roll.dones.push_back(res.done ? 1 : 0);

      session.obs = std::move(res.obs);
      if (res.done) session.needs_reset = true;
    }
    finalize(roll);
    return roll;
  }

  /// GAE over the stored batch, returns = advantages + values, then
  /// advantages normalized to zero mean and unit std.
  void finalize(RolloutBuffer& roll) const {
    const std::size_t T = roll.size();
    if (T == 0) throw UsageError("PpoAgent::finalize: empty rollout");
    const double bootstrap =
        roll.dones[T - 1] ? 0.0 : value_.forward(roll.next_states[T - 1])[0];
    gae(roll.rewards, roll.values, roll.dones, bootstrap, cfg_.gamma, cfg_.gae_lambda,
        roll.advantages, roll.returns);

    double mean = 0.0;
    for (double a : roll.advantages) mean += a;
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (double a : roll.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(T);
    const double denom = std::sqrt(var) + 1e-8;
    for (double& a : roll.advantages) a = (a - mean) / denom;
    roll.finalized = true;
  }

  struct UpdateDiag {
    double surrogate = 0.0;
    double value_loss = 0.0;
    double temporal = 0.0;
    double spatial = 0.0;
  };

  UpdateDiag update(const RolloutBuffer& roll, Rng& rng) {
    if (!roll.finalized) throw UsageError("PpoAgent::update: rollout not finalized");
    const std::size_t T = roll.size();
    UpdateDiag diag;

    std::vector<std::size_t> perm(T);
    for (std::size_t i = 0; i < T; ++i) perm[i] = i;

    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      for (std::size_t j = T - 1; j > 0; --j) {
        const std::size_t k = rng.index(j + 1);
        std::swap(perm[j], perm[k]);
      }
      for (std::size_t start = 0; start < T; start += cfg_.minibatch) {
        const std::size_t end = std::min(start + cfg_.minibatch, T);
        minibatch_step(roll, perm, start, end, rng, diag);
      }
    }
    return diag;
  }

 private:
  void minibatch_step(const RolloutBuffer& roll, const std::vector<std::size_t>& perm,
                      std::size_t start, std::size_t end, Rng& rng, UpdateDiag& diag) {
    const std::size_t B = end - start;
    const std::span<const std::size_t> idx(perm.data() + start, B);

    SurrogateGrad surr = ppo_surrogate_objective(actor_, log_std_, roll, idx, cfg_.clip);
    ValueGrad j;
    j.value = surr.value;
    j.grad = std::move(surr.actor_grad);

    ValueGrad lt;
    if (cfg_.caps.lambda_t > 0.0) {
      lt = policy_temporal_objective(actor_, B, [&](std::size_t m) {
        const std::size_t i = idx[m];
        return std::pair<const Vec&, const Vec&>(roll.states[i], roll.next_states[i]);
      });
    } else {
      lt.grad = actor_.zero_grads();
    }

    ValueGrad ls;
    if (cfg_.caps.lambda_s > 0.0) {
      ls = policy_spatial_objective(
          actor_, B, [&](std::size_t m) -> const Vec& { return roll.states[idx[m]]; },
          cfg_.caps, rng);
    } else {
      ls.grad = actor_.zero_grads();
    }

    ValueGrad obj = caps_objective(j, lt, ls, cfg_.caps);
    if (!std::isfinite(obj.value)) throw TrainingError("ppo update: non-finite actor objective");
    diag.surrogate = j.value;
    diag.temporal = lt.value;
    diag.spatial = ls.value;

    obj.grad.scale(-1.0);
    clip_global_norm(obj.grad, cfg_.grad_clip);
    adam_step(actor_, obj.grad, actor_opt_);

    for (double& g : surr.log_std_grad) g = -g;  // ascend
    log_std_opt_.update(log_std_, surr.log_std_grad);
    for (double& v : log_std_) v = std::clamp(v, -5.0, 2.0);

    Vec v_targets(B);
    for (std::size_t m = 0; m < B; ++m) v_targets[m] = roll.returns[idx[m]];
    ValueGrad v_mse = mse_objective(
        value_, B, [&](std::size_t m) -> const Vec& { return roll.states[idx[m]]; },
        v_targets);
    if (!std::isfinite(v_mse.value)) throw TrainingError("ppo update: non-finite value loss");
    diag.value_loss = v_mse.value;
    clip_global_norm(v_mse.grad, cfg_.grad_clip);
    adam_step(value_, v_mse.grad, value_opt_);
  }

  PpoConfig cfg_;
  std::size_t obs_dim_, act_dim_;
  Mlp actor_, value_;
  Vec log_std_;
  AdamState actor_opt_, value_opt_;
  AdamVec log_std_opt_;
};

}  // namespace capslab
