#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "capslab/adam.hpp"
#include "capslab/caps.hpp"
#include "capslab/mlp.hpp"
#include "capslab/objectives.hpp"
#include "capslab/replay_buffer.hpp"
#include "capslab/rng.hpp"

namespace capslab {

struct Td3Config {
  std::vector<std::size_t> hidden{64, 64};
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double rho = 0.995;  // target blend: tgt = rho*tgt + (1-rho)*live
  double explore_noise = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  std::size_t policy_delay = 2;
  std::size_t batch_size = 64;
  double grad_clip = 10.0;
  std::size_t replay_capacity = 0;  // 0: retain every transition of the run
  CapsConfig caps;
};

/// Twin-critic deterministic learner. The actor works in normalized action
/// space [-1,1]^d (Tanh head); smoothness penalties attach to the actor
/// objective only, value learning is untouched.
class Td3Agent {
 public:
  Td3Agent(std::size_t obs_dim, std::size_t act_dim, Td3Config cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)), obs_dim_(obs_dim), act_dim_(act_dim) {
    cfg_.caps.validate();
    std::vector<std::size_t> actor_sizes{obs_dim};
    std::vector<std::size_t> critic_sizes{obs_dim + act_dim};
    for (std::size_t h : cfg_.hidden) {
      actor_sizes.push_back(h);
      critic_sizes.push_back(h);
    }
    actor_sizes.push_back(act_dim);
    critic_sizes.push_back(1);

    actor_ = Mlp::init(actor_sizes, Activation::Tanh, Activation::Tanh, Rng::derive(seed, 0));
    q1_ = Mlp::init(critic_sizes, Activation::Tanh, Activation::Identity, Rng::derive(seed, 1));
    q2_ = Mlp::init(critic_sizes, Activation::Tanh, Activation::Identity, Rng::derive(seed, 2));
    actor_tgt_ = actor_;
    q1_tgt_ = q1_;
    q2_tgt_ = q2_;
    actor_opt_ = AdamState::for_net(actor_, cfg_.actor_lr);
    q1_opt_ = AdamState::for_net(q1_, cfg_.critic_lr);
    q2_opt_ = AdamState::for_net(q2_, cfg_.critic_lr);
  }

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  const Td3Config& config() const { return cfg_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic1() const { return q1_; }
  const Mlp& critic2() const { return q2_; }
  const Mlp& actor_target() const { return actor_tgt_; }
  const Mlp& critic1_target() const { return q1_tgt_; }
  const Mlp& critic2_target() const { return q2_tgt_; }

  /// Normalized action in [-1,1]^d; optional clipped exploration noise.
  Vec select_action(const Vec& obs, bool explore, Rng& rng) const {
    Vec a = actor_.forward(obs);
    if (explore && cfg_.explore_noise > 0.0) {
      for (double& v : a) v = std::clamp(v + cfg_.explore_noise * rng.normal(), -1.0, 1.0);
    }
    return a;
  }

  struct UpdateDiag {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
    double temporal = 0.0;
    double spatial = 0.0;
    bool actor_updated = false;
  };

  /// One gradient step; returns nothing when the buffer cannot fill a batch.
  std::optional<UpdateDiag> update(const ReplayBuffer& buf, Rng& rng) {
    const std::size_t B = cfg_.batch_size;
    if (buf.size() < B) return std::nullopt;
    UpdateDiag diag;

    const std::vector<std::size_t> idx = buf.sample_indices(B, rng);

    // Targets: y = r + gamma*(1-done)*min(Q1', Q2') at the smoothed target action.
    Vec targets(B);
    for (std::size_t bi = 0; bi < B; ++bi) {
      const Transition& tr = buf.at(idx[bi]);
      Vec a_next = actor_tgt_.forward(tr.s_next);
      for (double& v : a_next) {
        const double noise = std::clamp(cfg_.target_noise * rng.normal(),
                                        -cfg_.target_noise_clip, cfg_.target_noise_clip);
        v = std::clamp(v + noise, -1.0, 1.0);
      }
      const Vec sa = concat_obs_action(tr.s_next, a_next);
      const double q1t = q1_tgt_.forward(sa)[0];
      const double q2t = q2_tgt_.forward(sa)[0];
      const double mask = tr.done ? 0.0 : 1.0;
      targets[bi] = tr.r + cfg_.gamma * mask * std::min(q1t, q2t);
    }

    diag.critic_loss += critic_step(q1_, q1_opt_, buf, idx, targets);
    diag.critic_loss += critic_step(q2_, q2_opt_, buf, idx, targets);

    ++update_count_;
    if (update_count_ % cfg_.policy_delay == 0) {
      diag.actor_updated = true;
      ValueGrad j = deterministic_q_objective(
          actor_, q1_, B, [&](std::size_t bi) -> const Vec& { return buf.at(idx[bi]).s; });

      ValueGrad lt;
      if (cfg_.caps.lambda_t > 0.0) {
        lt = policy_temporal_objective(actor_, B, [&](std::size_t bi) {
          const Transition& tr = buf.at(idx[bi]);
          return std::pair<const Vec&, const Vec&>(tr.s, tr.s_next);
        });
      } else {
        lt.grad = actor_.zero_grads();
      }

      ValueGrad ls;
      if (cfg_.caps.lambda_s > 0.0) {
        ls = policy_spatial_objective(
            actor_, B, [&](std::size_t bi) -> const Vec& { return buf.at(idx[bi]).s; },
            cfg_.caps, rng);
      } else {
        ls.grad = actor_.zero_grads();
      }

      ValueGrad obj = caps_objective(j, lt, ls, cfg_.caps);
      if (!std::isfinite(obj.value)) throw TrainingError("td3 update: non-finite actor objective");
      diag.actor_objective = obj.value;
      diag.temporal = lt.value;
      diag.spatial = ls.value;

      obj.grad.scale(-1.0);  // ascend the objective
      clip_global_norm(obj.grad, cfg_.grad_clip);
      adam_step(actor_, obj.grad, actor_opt_);

      polyak_update(q1_tgt_, q1_, cfg_.rho);
      polyak_update(q2_tgt_, q2_, cfg_.rho);
      polyak_update(actor_tgt_, actor_, cfg_.rho);
    }
    return diag;
  }

 private:
  double critic_step(Mlp& q, AdamState& opt, const ReplayBuffer& buf,
                     const std::vector<std::size_t>& idx, const Vec& targets) {
    ValueGrad mse = mse_objective(
        q, idx.size(),
        [&](std::size_t bi) {
          const Transition& tr = buf.at(idx[bi]);
          return concat_obs_action(tr.s, tr.a);
        },
        targets);
    if (!std::isfinite(mse.value)) throw TrainingError("td3 update: non-finite critic loss");
    clip_global_norm(mse.grad, cfg_.grad_clip);
    adam_step(q, mse.grad, opt);
    return mse.value;
  }

  Td3Config cfg_;
  std::size_t obs_dim_, act_dim_;
  std::size_t update_count_ = 0;
  Mlp actor_, q1_, q2_;
  Mlp actor_tgt_, q1_tgt_, q2_tgt_;
  AdamState actor_opt_, q1_opt_, q2_opt_;
};

}  // namespace capslab
