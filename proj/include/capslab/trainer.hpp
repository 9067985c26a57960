#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capslab/env.hpp"
#include "capslab/errors.hpp"
#include "capslab/pendulum.hpp"
#include "capslab/ppo.hpp"
#include "capslab/quad_rate.hpp"
#include "capslab/replay_buffer.hpp"
#include "capslab/rng.hpp"
#include "capslab/spectrum.hpp"
#include "capslab/td3.hpp"
#include "capslab/toy_track.hpp"

namespace capslab {

enum class AlgoKind { Td3, Ppo };
enum class EnvKind { Toy, Pendulum, Quad };

inline const char* algo_name(AlgoKind a) { return a == AlgoKind::Td3 ? "td3" : "ppo"; }

inline AlgoKind algo_from_name(const std::string& s) {
  if (s == "td3") return AlgoKind::Td3;
  if (s == "ppo") return AlgoKind::Ppo;
  throw ConfigError("unknown algorithm: " + s);
}

inline const char* env_name(EnvKind e) {
  switch (e) {
    case EnvKind::Toy: return "toy";
    case EnvKind::Pendulum: return "pendulum";
    case EnvKind::Quad: return "quad";
  }
  throw ConfigError("unknown environment kind");
}

inline EnvKind env_from_name(const std::string& s) {
  if (s == "toy") return EnvKind::Toy;
  if (s == "pendulum") return EnvKind::Pendulum;
  if (s == "quad") return EnvKind::Quad;
  throw ConfigError("unknown environment: " + s);
}

/// Optional deviations from an environment's stock parameters. `shift`
/// applies the quad's evaluation-time domain randomization; the other tasks
/// have no shifted variant and ignore it.
struct EnvOverrides {
  std::size_t horizon = 0;  // 0: the environment's native horizon
  std::optional<DomainShift> shift;
};

inline std::unique_ptr<Env> make_env(EnvKind kind, const EnvOverrides& ov) {
  switch (kind) {
    case EnvKind::Toy: {
      ToyTrack::Params p;
      if (ov.horizon > 0) p.horizon = ov.horizon;
      return std::make_unique<ToyTrack>(p);
    }
    case EnvKind::Pendulum: {
      Pendulum::Params p;
      if (ov.horizon > 0) p.horizon = ov.horizon;
      return std::make_unique<Pendulum>(p);
    }
    case EnvKind::Quad: {
      QuadRate::Params p;
      if (ov.horizon > 0) p.horizon = ov.horizon;
      p.shift = ov.shift;
      return std::make_unique<QuadRate>(p);
    }
  }
  throw ConfigError("unknown environment kind");
}

inline std::unique_ptr<Env> make_env(EnvKind kind, bool shifted = false) {
  EnvOverrides ov;
  if (shifted) ov.shift = DomainShift{};
  return make_env(kind, ov);
}

struct TrainSpec {
  AlgoKind algo = AlgoKind::Td3;
  EnvKind env = EnvKind::Toy;
  Td3Config td3;
  PpoConfig ppo;
  std::size_t steps = 15000;       // environment interactions
  std::size_t eval_every = 0;      // 0: no learning-curve points
  std::size_t eval_episodes = 10;
  std::size_t eval_horizon = 0;    // 0: the environment's native horizon
  std::size_t warmup = 1000;       // uniform random actions before the actor acts (off-policy only)
  std::uint64_t seed = 0;
  bool shift_eval = false;              // extra final evaluation on the shifted variant
  std::optional<DomainShift> shift;     // perturbation ranges for that evaluation
};

struct EvalResult {
  double reward = 0.0;        // mean episode return
  double sm = 0.0;            // mean over episodes of the per-episode action-spectrum score
  std::optional<double> mae;  // mean |tracking error| in native units, when the task reports one
  Vec episode_rewards;        // per-episode values behind the means
  Vec episode_sms;
  Trajectory sample_episode;  // first evaluation episode, native actions
};

struct CurvePoint {
  std::size_t step = 0;
  double reward = 0.0;
  double sm = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::optional<EvalResult> final_eval;
  std::optional<EvalResult> shift_eval;
  bool failed = false;
  std::string failure_reason;
  Mlp policy;                 // deterministic actor (the mean head for the stochastic learner)
  double action_scale = 1.0;  // native = clamp(policy(obs), -1, 1) * action_scale
};

/// Evaluation episodes draw reset seeds from stream ids 5000+e so they never
/// collide with training episodes (stream ids counted from 0).
constexpr std::uint64_t kEvalSeedOffset = 5000;

/// A deterministic controller under evaluation: `act` maps an observation to
/// a native-unit action; `on_reset` (optional) clears internal state at
/// episode boundaries so stateful wrappers start every episode fresh.
struct EpisodePolicy {
  std::function<Vec(const Vec&)> act;
  std::function<void()> on_reset;
};

/// The deterministic actor convention shared by both learners: squash the
/// network output to [-1, 1] and scale to native units. Captures `actor` by
/// reference; it must outlive the returned policy.
inline EpisodePolicy mlp_policy(const Mlp& actor, double action_scale) {
  EpisodePolicy p;
  p.act = [&actor, action_scale](const Vec& obs) {
    Vec a = actor.forward(obs);
    for (double& v : a) v = std::clamp(v, -1.0, 1.0) * action_scale;
    return a;
  };
  return p;
}

/// Deterministic policy scoring: mean return, action smoothness at the
/// task's control rate, and tracking MAE where available. The smoothness
/// score is computed on the actions actually sent to the environment.
inline EvalResult evaluate_policy(Env& env, const EpisodePolicy& policy, std::uint64_t seed,
                                  std::size_t episodes) {
  if (episodes == 0) throw UsageError("evaluate_policy: need at least one episode");
  if (!policy.act) throw UsageError("evaluate_policy: policy has no action function");
  EvalResult out;
  double reward_sum = 0.0;
  double sm_sum = 0.0;
  double err_sum = 0.0;
  std::size_t err_count = 0;

  for (std::size_t e = 0; e < episodes; ++e) {
    Vec obs = env.reset(Rng::derive(seed, kEvalSeedOffset + e));
    if (policy.on_reset) policy.on_reset();
    std::vector<Vec> channels(env.action_size());
    double ep_reward = 0.0;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
      Vec native = policy.act(obs);
      for (std::size_t d = 0; d < native.size(); ++d) channels[d].push_back(native[d]);
      StepResult res = env.step(native);
      ep_reward += res.reward;
      const Vec err = env.tracking_error();
      for (double v : err) err_sum += std::abs(v);
      err_count += err.size();
      if (e == 0) {
        Transition tr;
        tr.s = std::move(obs);
        tr.a = native;
        tr.r = res.reward;
        tr.s_next = res.obs;
        tr.done = res.done;
        out.sample_episode.steps.push_back(std::move(tr));
      }
      obs = std::move(res.obs);
      if (res.done) break;
    }
    reward_sum += ep_reward;
    const double ep_sm = smoothness(channels, env.control_rate_hz()).sm;
    sm_sum += ep_sm;
    out.episode_rewards.push_back(ep_reward);
    out.episode_sms.push_back(ep_sm);
  }

  out.reward = reward_sum / static_cast<double>(episodes);
  out.sm = sm_sum / static_cast<double>(episodes);
  if (err_count > 0) out.mae = err_sum / static_cast<double>(err_count);
  return out;
}

inline EvalResult evaluate_policy(Env& env, const Mlp& actor, double action_scale,
                                  std::uint64_t seed, std::size_t episodes) {
  return evaluate_policy(env, mlp_policy(actor, action_scale), seed, episodes);
}

namespace detail {

/// Runs the off-policy loop. Episode reset seeds are derive(seed, episode).
inline void train_td3(const TrainSpec& spec, Env& env, Env& eval_env, TrainResult& out) {
  Td3Agent agent(env.obs_size(), env.action_size(), spec.td3, Rng::derive(spec.seed, 2'000'000));
  Rng rng(Rng::derive(spec.seed, 1'000'000));
  const std::size_t retain = spec.td3.replay_capacity > 0
                                 ? std::max(spec.td3.replay_capacity, spec.td3.batch_size)
                                 : std::max<std::size_t>(spec.steps, spec.td3.batch_size);
  ReplayBuffer buf(retain);
  const double bound = env.action_bound();

  std::uint64_t episode = 0;
  bool needs_reset = true;
  Vec obs;
  for (std::size_t step = 1; step <= spec.steps; ++step) {
    if (needs_reset) {
      obs = env.reset(Rng::derive(spec.seed, episode));
      ++episode;
      needs_reset = false;
    }
    Vec action(env.action_size());
    if (step <= spec.warmup) {
      for (double& v : action) v = rng.uniform(-1.0, 1.0);
    } else {
      action = agent.select_action(obs, true, rng);
    }
    Vec native(action.size());
    for (std::size_t d = 0; d < action.size(); ++d) native[d] = action[d] * bound;
    StepResult res = env.step(native);

    Transition tr;
    tr.s = std::move(obs);
    tr.a = std::move(action);
    tr.r = res.reward;
    tr.s_next = res.obs;
    tr.done = res.done;
    buf.add(std::move(tr));

    obs = std::move(res.obs);
    if (res.done) needs_reset = true;

    agent.update(buf, rng);

    if (spec.eval_every > 0 && step % spec.eval_every == 0 && step < spec.steps) {
      const EvalResult ev =
          evaluate_policy(eval_env, agent.actor(), bound, spec.seed, spec.eval_episodes);
      out.curve.push_back({step, ev.reward, ev.sm});
    }
  }
  out.policy = agent.actor();
}

/// Runs the on-policy loop: collect one horizon, update, repeat until the
/// interaction budget is spent (the last batch may be short).
inline void train_ppo(const TrainSpec& spec, Env& env, Env& eval_env, TrainResult& out) {
  PpoAgent agent(env.obs_size(), env.action_size(), spec.ppo, Rng::derive(spec.seed, 2'000'000));
  Rng rng(Rng::derive(spec.seed, 1'000'000));
  EnvSession session;
  session.env = &env;
  session.seed_base = spec.seed;
  const double bound = env.action_bound();

  std::size_t done_steps = 0;
  std::size_t next_eval = spec.eval_every;
  while (done_steps < spec.steps) {
    const std::size_t batch = std::min(spec.ppo.rollout_horizon, spec.steps - done_steps);
    RolloutBuffer roll = agent.collect(session, batch, rng);
    agent.update(roll, rng);
    done_steps += batch;

    if (spec.eval_every > 0 && next_eval <= done_steps && done_steps < spec.steps) {
      const EvalResult ev =
          evaluate_policy(eval_env, agent.actor(), bound, spec.seed, spec.eval_episodes);
      out.curve.push_back({done_steps, ev.reward, ev.sm});
      while (next_eval <= done_steps) next_eval += spec.eval_every;
    }
  }
  out.policy = agent.actor();
}

}  // namespace detail

/// Trains one run to completion and scores the final policy. Training faults
/// (non-finite losses, environment faults) mark the result failed instead of
/// propagating; scores are absent on failure.
inline TrainResult train(const TrainSpec& spec) {
  TrainResult out;
  std::unique_ptr<Env> env = make_env(spec.env);
  EnvOverrides eval_ov;
  eval_ov.horizon = spec.eval_horizon;
  std::unique_ptr<Env> eval_env = make_env(spec.env, eval_ov);
  out.action_scale = env->action_bound();

  try {
    if (spec.algo == AlgoKind::Td3) {
      detail::train_td3(spec, *env, *eval_env, out);
    } else {
      detail::train_ppo(spec, *env, *eval_env, out);
    }
    const EvalResult final_ev =
        evaluate_policy(*eval_env, out.policy, out.action_scale, spec.seed, spec.eval_episodes);
    if (spec.steps > 0) out.curve.push_back({spec.steps, final_ev.reward, final_ev.sm});
    out.final_eval = final_ev;
    if (spec.shift_eval) {
      EnvOverrides shift_ov = eval_ov;
      shift_ov.shift = spec.shift ? *spec.shift : DomainShift{};
      std::unique_ptr<Env> shifted = make_env(spec.env, shift_ov);
      out.shift_eval =
          evaluate_policy(*shifted, out.policy, out.action_scale, spec.seed, spec.eval_episodes);
    }
  } catch (const TrainingError& e) {
    out.failed = true;
    out.failure_reason = e.what();
  } catch (const EnvFault& e) {
    out.failed = true;
    out.failure_reason = e.what();
  } catch (const MetricError& e) {
    out.failed = true;
    out.failure_reason = e.what();
  }
  return out;
}

/// Learning-curve CSV: one row per evaluation point.
inline void curve_to_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "step,eval_reward,eval_sm\n";
  out.precision(17);
  for (const CurvePoint& p : curve) out << p.step << ',' << p.reward << ',' << p.sm << '\n';
}

}  // namespace capslab
