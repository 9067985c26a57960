#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "capslab/errors.hpp"
#include "capslab/filters.hpp"
#include "capslab/spectrum.hpp"
#include "capslab/trainer.hpp"

namespace capslab {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const Vec& xs) {
  if (xs.empty()) throw UsageError("mean_std: empty sample");
  MeanStd out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

/// Default root for experiment output directories; overridable through the
/// CAPSLAB_OUT_ROOT environment variable.
inline std::string default_out_root() {
  const char* v = std::getenv("CAPSLAB_OUT_ROOT");
  return (v != nullptr && *v != '\0') ? v : "results";
}

/// UTC timestamp for run-stamped directory names. Timestamps appear only in
/// directory names, never inside artifacts, so report bytes stay
/// reproducible.
inline std::string run_stamp(std::time_t t = std::time(nullptr)) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

struct EvalProtocol {
  std::size_t episodes = 10;
  std::size_t horizon = 0;  // 0: the environment's native horizon
  std::size_t every = 0;    // learning-curve cadence in steps; 0 disables
};

/// Complete description of one multi-seed experiment. Parsed from JSON with
/// strict key checking so typos are rejected before any run starts.
struct ExperimentConfig {
  std::string name = "experiment";
  EnvKind env = EnvKind::Toy;
  AlgoKind algo = AlgoKind::Td3;
  CapsConfig caps;
  std::size_t steps = 15000;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  EvalProtocol eval;
  std::size_t warmup = 1000;
  std::vector<std::size_t> hidden;       // empty: per-algorithm default
  Td3Config td3;
  PpoConfig ppo;
  bool shift_eval = false;
  std::optional<DomainShift> shift;      // perturbation ranges for shifted evaluation
  std::optional<nlohmann::json> filter;  // evaluation-time action filter
};

inline void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.name.empty()) throw ConfigError("experiment config: empty name");
  if (cfg.seeds.empty()) throw ConfigError("experiment config: seed list must be non-empty");
  const std::set<std::uint64_t> unique(cfg.seeds.begin(), cfg.seeds.end());
  if (unique.size() != cfg.seeds.size())
    throw ConfigError("experiment config: duplicate seeds");
  if (cfg.eval.episodes == 0)
    throw ConfigError("experiment config: eval.episodes must be positive");
  cfg.caps.validate();
  for (std::size_t h : cfg.hidden)
    if (h == 0) throw ConfigError("experiment config: hidden layer sizes must be positive");
  if (cfg.td3.actor_lr <= 0 || cfg.td3.critic_lr <= 0)
    throw ConfigError("experiment config: td3 learning rates must be positive");
  if (cfg.td3.batch_size == 0 || cfg.td3.policy_delay == 0)
    throw ConfigError("experiment config: td3 batch_size and policy_delay must be positive");
  if (cfg.td3.gamma < 0 || cfg.td3.gamma > 1 || cfg.td3.rho < 0 || cfg.td3.rho >= 1)
    throw ConfigError("experiment config: td3 gamma in [0,1], rho in [0,1)");
  if (cfg.ppo.actor_lr <= 0 || cfg.ppo.value_lr <= 0)
    throw ConfigError("experiment config: ppo learning rates must be positive");
  if (cfg.ppo.clip <= 0) throw ConfigError("experiment config: ppo clip must be positive");
  if (cfg.ppo.epochs == 0 || cfg.ppo.minibatch == 0 || cfg.ppo.rollout_horizon == 0)
    throw ConfigError("experiment config: ppo epochs, minibatch, rollout_horizon must be positive");
  if (cfg.ppo.gamma < 0 || cfg.ppo.gamma > 1 || cfg.ppo.gae_lambda < 0 || cfg.ppo.gae_lambda > 1)
    throw ConfigError("experiment config: ppo gamma and gae_lambda must be in [0,1]");
  if (cfg.filter) filter_from_json(*cfg.filter);  // throws ConfigError when malformed
}

namespace detail {

inline void require_known_keys(const nlohmann::json& j,
                               std::initializer_list<const char*> allowed,
                               const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string("experiment config: unknown key '") + it.key() + "' in " +
                        where);
  }
}

inline double get_number(const nlohmann::json& j, const char* key, double fallback,
                         const char* where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number())
    throw ConfigError(std::string("experiment config: '") + where + "." + key +
                      "' must be a number");
  return j.at(key).get<double>();
}

inline std::size_t get_count(const nlohmann::json& j, const char* key, std::size_t fallback,
                             const char* where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_unsigned())
    throw ConfigError(std::string("experiment config: '") + where + "." + key +
                      "' must be a non-negative integer");
  return j.at(key).get<std::size_t>();
}

inline bool get_flag(const nlohmann::json& j, const char* key, bool fallback, const char* where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean())
    throw ConfigError(std::string("experiment config: '") + where + "." + key +
                      "' must be a boolean");
  return j.at(key).get<bool>();
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config: top level must be an object");
  detail::require_known_keys(j,
                             {"name", "env", "algo", "steps", "seeds", "eval", "caps", "warmup",
                              "hidden", "td3", "ppo", "shift_eval", "shift", "filter"},
                             "top level");
  for (const char* req : {"env", "algo", "steps", "seeds"})
    if (!j.contains(req))
      throw ConfigError(std::string("experiment config: missing required key '") + req + "'");

  ExperimentConfig cfg;
  if (j.contains("name")) {
    if (!j.at("name").is_string()) throw ConfigError("experiment config: 'name' must be a string");
    cfg.name = j.at("name").get<std::string>();
  }
  if (!j.at("env").is_string() || !j.at("algo").is_string())
    throw ConfigError("experiment config: 'env' and 'algo' must be strings");
  cfg.env = env_from_name(j.at("env").get<std::string>());
  cfg.algo = algo_from_name(j.at("algo").get<std::string>());
  cfg.steps = detail::get_count(j, "steps", cfg.steps, "top level");
  cfg.warmup = detail::get_count(j, "warmup", cfg.warmup, "top level");

  if (!j.at("seeds").is_array()) throw ConfigError("experiment config: 'seeds' must be an array");
  cfg.seeds.clear();
  for (const auto& s : j.at("seeds")) {
    if (!s.is_number_unsigned())
      throw ConfigError("experiment config: seeds must be non-negative integers");
    cfg.seeds.push_back(s.get<std::uint64_t>());
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (!e.is_object()) throw ConfigError("experiment config: 'eval' must be an object");
    detail::require_known_keys(e, {"episodes", "horizon", "every"}, "eval");
    cfg.eval.episodes = detail::get_count(e, "episodes", cfg.eval.episodes, "eval");
    cfg.eval.horizon = detail::get_count(e, "horizon", cfg.eval.horizon, "eval");
    cfg.eval.every = detail::get_count(e, "every", cfg.eval.every, "eval");
  }

  if (j.contains("caps")) {
    const auto& c = j.at("caps");
    if (!c.is_object()) throw ConfigError("experiment config: 'caps' must be an object");
    detail::require_known_keys(c, {"lambda_t", "lambda_s", "sigma", "perturbations_per_state"},
                               "caps");
    cfg.caps.lambda_t = detail::get_number(c, "lambda_t", cfg.caps.lambda_t, "caps");
    cfg.caps.lambda_s = detail::get_number(c, "lambda_s", cfg.caps.lambda_s, "caps");
    cfg.caps.sigma = detail::get_number(c, "sigma", cfg.caps.sigma, "caps");
    cfg.caps.perturbations_per_state =
        detail::get_count(c, "perturbations_per_state", cfg.caps.perturbations_per_state, "caps");
  }

  if (j.contains("hidden")) {
    if (!j.at("hidden").is_array())
      throw ConfigError("experiment config: 'hidden' must be an array");
    for (const auto& h : j.at("hidden")) {
      if (!h.is_number_unsigned())
        throw ConfigError("experiment config: hidden sizes must be positive integers");
      cfg.hidden.push_back(h.get<std::size_t>());
    }
  }

  if (j.contains("td3")) {
    const auto& t = j.at("td3");
    if (!t.is_object()) throw ConfigError("experiment config: 'td3' must be an object");
    detail::require_known_keys(t,
                               {"actor_lr", "critic_lr", "gamma", "rho", "explore_noise",
                                "target_noise", "target_noise_clip", "policy_delay", "batch_size",
                                "grad_clip", "replay_capacity"},
                               "td3");
    Td3Config& c = cfg.td3;
    c.actor_lr = detail::get_number(t, "actor_lr", c.actor_lr, "td3");
    c.critic_lr = detail::get_number(t, "critic_lr", c.critic_lr, "td3");
    c.gamma = detail::get_number(t, "gamma", c.gamma, "td3");
    c.rho = detail::get_number(t, "rho", c.rho, "td3");
    c.explore_noise = detail::get_number(t, "explore_noise", c.explore_noise, "td3");
    c.target_noise = detail::get_number(t, "target_noise", c.target_noise, "td3");
    c.target_noise_clip = detail::get_number(t, "target_noise_clip", c.target_noise_clip, "td3");
    c.policy_delay = detail::get_count(t, "policy_delay", c.policy_delay, "td3");
    c.batch_size = detail::get_count(t, "batch_size", c.batch_size, "td3");
    c.grad_clip = detail::get_number(t, "grad_clip", c.grad_clip, "td3");
    c.replay_capacity = detail::get_count(t, "replay_capacity", c.replay_capacity, "td3");
  }

  if (j.contains("ppo")) {
    const auto& p = j.at("ppo");
    if (!p.is_object()) throw ConfigError("experiment config: 'ppo' must be an object");
    detail::require_known_keys(p,
                               {"actor_lr", "value_lr", "gamma", "gae_lambda", "clip", "epochs",
                                "minibatch", "rollout_horizon", "init_log_std", "grad_clip"},
                               "ppo");
    PpoConfig& c = cfg.ppo;
    c.actor_lr = detail::get_number(p, "actor_lr", c.actor_lr, "ppo");
    c.value_lr = detail::get_number(p, "value_lr", c.value_lr, "ppo");
    c.gamma = detail::get_number(p, "gamma", c.gamma, "ppo");
    c.gae_lambda = detail::get_number(p, "gae_lambda", c.gae_lambda, "ppo");
    c.clip = detail::get_number(p, "clip", c.clip, "ppo");
    c.epochs = detail::get_count(p, "epochs", c.epochs, "ppo");
    c.minibatch = detail::get_count(p, "minibatch", c.minibatch, "ppo");
    c.rollout_horizon = detail::get_count(p, "rollout_horizon", c.rollout_horizon, "ppo");
    c.init_log_std = detail::get_number(p, "init_log_std", c.init_log_std, "ppo");
    c.grad_clip = detail::get_number(p, "grad_clip", c.grad_clip, "ppo");
  }

  cfg.shift_eval = detail::get_flag(j, "shift_eval", cfg.shift_eval, "top level");
  if (j.contains("shift")) {
    const auto& s = j.at("shift");
    if (!s.is_object()) throw ConfigError("experiment config: 'shift' must be an object");
    detail::require_known_keys(s, {"inertia_range", "tau_range", "obs_noise"}, "shift");
    DomainShift d;
    d.inertia_range = detail::get_number(s, "inertia_range", d.inertia_range, "shift");
    d.tau_range = detail::get_number(s, "tau_range", d.tau_range, "shift");
    d.obs_noise = detail::get_number(s, "obs_noise", d.obs_noise, "shift");
    cfg.shift = d;
  }
  if (j.contains("filter")) cfg.filter = j.at("filter");

  validate_experiment(cfg);
  return cfg;
}

/// Canonical form: every effective setting is written out, so the config copy
/// in a results directory is self-contained.
inline nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["env"] = env_name(cfg.env);
  j["algo"] = algo_name(cfg.algo);
  j["steps"] = cfg.steps;
  j["seeds"] = cfg.seeds;
  j["warmup"] = cfg.warmup;
  j["eval"] = {{"episodes", cfg.eval.episodes},
               {"horizon", cfg.eval.horizon},
               {"every", cfg.eval.every}};
  j["caps"] = {{"lambda_t", cfg.caps.lambda_t},
               {"lambda_s", cfg.caps.lambda_s},
               {"sigma", cfg.caps.sigma},
               {"perturbations_per_state", cfg.caps.perturbations_per_state}};
  if (!cfg.hidden.empty()) j["hidden"] = cfg.hidden;
  j["td3"] = {{"actor_lr", cfg.td3.actor_lr},
              {"critic_lr", cfg.td3.critic_lr},
              {"gamma", cfg.td3.gamma},
              {"rho", cfg.td3.rho},
              {"explore_noise", cfg.td3.explore_noise},
              {"target_noise", cfg.td3.target_noise},
              {"target_noise_clip", cfg.td3.target_noise_clip},
              {"policy_delay", cfg.td3.policy_delay},
              {"batch_size", cfg.td3.batch_size},
              {"grad_clip", cfg.td3.grad_clip},
              {"replay_capacity", cfg.td3.replay_capacity}};
  j["ppo"] = {{"actor_lr", cfg.ppo.actor_lr},
              {"value_lr", cfg.ppo.value_lr},
              {"gamma", cfg.ppo.gamma},
              {"gae_lambda", cfg.ppo.gae_lambda},
              {"clip", cfg.ppo.clip},
              {"epochs", cfg.ppo.epochs},
              {"minibatch", cfg.ppo.minibatch},
              {"rollout_horizon", cfg.ppo.rollout_horizon},
              {"init_log_std", cfg.ppo.init_log_std},
              {"grad_clip", cfg.ppo.grad_clip}};
  j["shift_eval"] = cfg.shift_eval;
  if (cfg.shift)
    j["shift"] = {{"inertia_range", cfg.shift->inertia_range},
                  {"tau_range", cfg.shift->tau_range},
                  {"obs_noise", cfg.shift->obs_noise}};
  if (cfg.filter) j["filter"] = *cfg.filter;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("experiment config: ") + e.what(), 0);
  }
  return experiment_from_json(j);
}

/// Outcome of one seed. A set failure flag means the numeric fields are
/// absent; they are never zero-filled.
struct RunResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure_reason;
  std::optional<double> reward_mean, reward_std;
  std::optional<double> sm_mean, sm_std;
  std::optional<double> mae;
  std::optional<double> shift_reward_mean, shift_reward_std;
  std::optional<double> shift_sm_mean, shift_sm_std;
  std::optional<double> shift_mae;
  std::string curve_path;    // all paths relative to the directory holding the report
  std::string actions_path;
  std::string policy_path;
  std::string result_path;
};

inline nlohmann::json run_result_to_json(const RunResult& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["failed"] = r.failed;
  if (r.failed) j["failure_reason"] = r.failure_reason;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("reward_mean", r.reward_mean);
  put("reward_std", r.reward_std);
  put("sm_mean", r.sm_mean);
  put("sm_std", r.sm_std);
  put("mae", r.mae);
  put("shift_reward_mean", r.shift_reward_mean);
  put("shift_reward_std", r.shift_reward_std);
  put("shift_sm_mean", r.shift_sm_mean);
  put("shift_sm_std", r.shift_sm_std);
  put("shift_mae", r.shift_mae);
  if (!r.curve_path.empty()) j["curve"] = r.curve_path;
  if (!r.actions_path.empty()) j["actions"] = r.actions_path;
  if (!r.policy_path.empty()) j["policy"] = r.policy_path;
  j["result"] = r.result_path;
  return j;
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("seed") || !j.contains("failed"))
    throw ConfigError("run result: need 'seed' and 'failed'");
  RunResult r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.failed = j.at("failed").get<bool>();
  if (j.contains("failure_reason")) r.failure_reason = j.at("failure_reason").get<std::string>();
  auto get = [&j](const char* key) -> std::optional<double> {
    if (j.contains(key)) return j.at(key).get<double>();
    return std::nullopt;
  };
  r.reward_mean = get("reward_mean");
  r.reward_std = get("reward_std");
  r.sm_mean = get("sm_mean");
  r.sm_std = get("sm_std");
  r.mae = get("mae");
  r.shift_reward_mean = get("shift_reward_mean");
  r.shift_reward_std = get("shift_reward_std");
  r.shift_sm_mean = get("shift_sm_mean");
  r.shift_sm_std = get("shift_sm_std");
  r.shift_mae = get("shift_mae");
  if (j.contains("curve")) r.curve_path = j.at("curve").get<std::string>();
  if (j.contains("actions")) r.actions_path = j.at("actions").get<std::string>();
  if (j.contains("policy")) r.policy_path = j.at("policy").get<std::string>();
  if (j.contains("result")) r.result_path = j.at("result").get<std::string>();
  return r;
}

inline TrainSpec to_train_spec(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainSpec s;
  s.algo = cfg.algo;
  s.env = cfg.env;
  s.steps = cfg.steps;
  s.seed = seed;
  s.warmup = cfg.warmup;
  s.eval_every = cfg.eval.every;
  s.eval_episodes = cfg.eval.episodes;
  s.eval_horizon = cfg.eval.horizon;
  s.td3 = cfg.td3;
  s.td3.caps = cfg.caps;
  s.ppo = cfg.ppo;
  s.ppo.caps = cfg.caps;
  if (!cfg.hidden.empty()) {
    s.td3.hidden = cfg.hidden;
    s.ppo.hidden = cfg.hidden;
  }
  s.shift_eval = cfg.shift_eval;
  s.shift = cfg.shift;
  return s;
}

inline std::string seed_dir_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seed%04llu", static_cast<unsigned long long>(seed));
  return buf;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

inline void fill_metrics(RunResult& rr, const EvalResult& fin,
                         const std::optional<EvalResult>& shift) {
  const MeanStd rw = mean_std(fin.episode_rewards);
  const MeanStd sm = mean_std(fin.episode_sms);
  rr.reward_mean = rw.mean;
  rr.reward_std = rw.std;
  rr.sm_mean = sm.mean;
  rr.sm_std = sm.std;
  rr.mae = fin.mae;
  if (shift) {
    const MeanStd srw = mean_std(shift->episode_rewards);
    const MeanStd ssm = mean_std(shift->episode_sms);
    rr.shift_reward_mean = srw.mean;
    rr.shift_reward_std = srw.std;
    rr.shift_sm_mean = ssm.mean;
    rr.shift_sm_std = ssm.std;
    rr.shift_mae = shift->mae;
  }
}

}  // namespace detail

/// Trains every seed of the config, persisting artifacts under
/// exp_dir/seedNNNN/ and a canonical config copy at exp_dir/config.json.
/// Paths inside the results are relative, prefixed with `path_prefix` so a
/// sweep can point at its subdirectories from one report. A failed seed is
/// recorded and the remaining seeds continue.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg,
                                             const std::filesystem::path& exp_dir,
                                             const std::string& path_prefix = "") {
  validate_experiment(cfg);
  std::filesystem::create_directories(exp_dir);
  detail::write_text_file(exp_dir / "config.json", experiment_to_json(cfg).dump(2) + "\n");

  std::vector<RunResult> results;
  results.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    const std::string sd = seed_dir_name(seed);
    const std::filesystem::path seed_dir = exp_dir / sd;
    std::filesystem::create_directories(seed_dir);

    const TrainResult tr = train(to_train_spec(cfg, seed));

    RunResult rr;
    rr.seed = seed;
    rr.result_path = path_prefix + sd + "/result.json";
    if (tr.failed) {
      rr.failed = true;
      rr.failure_reason = tr.failure_reason;
    } else {
      EvalResult fin = *tr.final_eval;
      std::optional<EvalResult> shift = tr.shift_eval;
      if (cfg.filter) {
        // The filter wraps evaluation only; training always sees raw actions.
        EnvOverrides ov;
        ov.horizon = cfg.eval.horizon;
        ActionFilter filt = filter_from_json(*cfg.filter);
        std::unique_ptr<Env> ev_env = make_env(cfg.env, ov);
        fin = evaluate_policy(*ev_env,
                              wrap_policy(mlp_policy(tr.policy, tr.action_scale), filt), seed,
                              cfg.eval.episodes);
        if (cfg.shift_eval) {
          EnvOverrides sov = ov;
          sov.shift = cfg.shift ? *cfg.shift : DomainShift{};
          ActionFilter sfilt = filter_from_json(*cfg.filter);
          std::unique_ptr<Env> sh_env = make_env(cfg.env, sov);
          shift = evaluate_policy(*sh_env,
                                  wrap_policy(mlp_policy(tr.policy, tr.action_scale), sfilt),
                                  seed, cfg.eval.episodes);
        }
      }
      detail::fill_metrics(rr, fin, shift);
      rr.curve_path = path_prefix + sd + "/curve.csv";
      rr.actions_path = path_prefix + sd + "/actions.csv";
      rr.policy_path = path_prefix + sd + "/policy.net";
      {
        std::ofstream curve(seed_dir / "curve.csv");
        if (!curve) throw ConfigError("cannot write " + (seed_dir / "curve.csv").string());
        curve_to_csv(tr.curve, curve);
      }
      trajectory_to_csv(fin.sample_episode, (seed_dir / "actions.csv").string());
      tr.policy.save((seed_dir / "policy.net").string());
    }
    detail::write_text_file(seed_dir / "result.json", run_result_to_json(rr).dump(2) + "\n");
    results.push_back(std::move(rr));
  }
  return results;
}

/// One aggregate line of a comparison report: mean and std over the seeds
/// that finished, plus percentage deltas against the vanilla row.
struct ComparisonRow {
  std::string label;
  std::size_t seeds = 0;
  std::size_t failures = 0;
  std::optional<MeanStd> reward, sm, mae;
  std::optional<MeanStd> shift_reward, shift_sm, shift_mae;
  std::optional<double> delta_reward_pct, delta_sm_pct, delta_mae_pct;
  std::vector<std::string> run_paths;
};

struct ComparisonReport {
  std::string env;
  std::string algo;
  double control_rate_hz = 0.0;  // f_s behind every Sm in this report
  std::string mae_unit;          // "" when the task reports no tracking error
  double mae_scale = 1.0;        // applied to row MAE aggregates
  std::vector<ComparisonRow> rows;
};

inline ComparisonRow aggregate_row(const std::string& label,
                                   const std::vector<RunResult>& results) {
  ComparisonRow row;
  row.label = label;
  row.seeds = results.size();
  Vec rewards, sms, maes, s_rewards, s_sms, s_maes;
  for (const RunResult& r : results) {
    row.run_paths.push_back(r.result_path);
    if (r.failed) {
      ++row.failures;
      continue;
    }
    if (r.reward_mean) rewards.push_back(*r.reward_mean);
    if (r.sm_mean) sms.push_back(*r.sm_mean);
    if (r.mae) maes.push_back(*r.mae);
    if (r.shift_reward_mean) s_rewards.push_back(*r.shift_reward_mean);
    if (r.shift_sm_mean) s_sms.push_back(*r.shift_sm_mean);
    if (r.shift_mae) s_maes.push_back(*r.shift_mae);
  }
  if (!rewards.empty()) row.reward = mean_std(rewards);
  if (!sms.empty()) row.sm = mean_std(sms);
  if (!maes.empty()) row.mae = mean_std(maes);
  if (!s_rewards.empty()) row.shift_reward = mean_std(s_rewards);
  if (!s_sms.empty()) row.shift_sm = mean_std(s_sms);
  if (!s_maes.empty()) row.shift_mae = mean_std(s_maes);
  return row;
}

/// Assembles rows into a report: resolves the MAE display unit, scales MAE
/// aggregates, and computes percentage deltas against the row labeled
/// "vanilla" (when present and nonzero).
inline ComparisonReport build_report(const ExperimentConfig& cfg, std::vector<ComparisonRow> rows) {
  ComparisonReport rep;
  rep.env = env_name(cfg.env);
  rep.algo = algo_name(cfg.algo);
  rep.control_rate_hz = make_env(cfg.env)->control_rate_hz();
  if (cfg.env == EnvKind::Quad) {
    rep.mae_unit = "deg/s";  // simulator-native rad/s converted for readability
    rep.mae_scale = 180.0 / std::numbers::pi;
  } else if (cfg.env == EnvKind::Toy) {
    rep.mae_unit = "units";
  }
  for (ComparisonRow& row : rows) {
    auto scale = [&rep](std::optional<MeanStd>& ms) {
      if (ms) {
        ms->mean *= rep.mae_scale;
        ms->std *= rep.mae_scale;
      }
    };
    scale(row.mae);
    scale(row.shift_mae);
  }
  const ComparisonRow* vanilla = nullptr;
  for (const ComparisonRow& row : rows)
    if (row.label == "vanilla") vanilla = &row;
  if (vanilla != nullptr) {
    for (ComparisonRow& row : rows) {
      if (row.label == "vanilla") continue;
      auto delta = [](const std::optional<MeanStd>& x,
                      const std::optional<MeanStd>& v) -> std::optional<double> {
        if (!x || !v || v->mean == 0.0) return std::nullopt;
        return (x->mean - v->mean) / std::abs(v->mean) * 100.0;
      };
      row.delta_reward_pct = delta(row.reward, vanilla->reward);
      row.delta_sm_pct = delta(row.sm, vanilla->sm);
      row.delta_mae_pct = delta(row.mae, vanilla->mae);
    }
  }
  rep.rows = std::move(rows);
  return rep;
}

inline nlohmann::json report_to_json(const ComparisonReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ComparisonRow& row : rep.rows) {
    nlohmann::json r;
    r["label"] = row.label;
    r["seeds"] = row.seeds;
    r["failures"] = row.failures;
    auto put_ms = [&r](const char* key, const std::optional<MeanStd>& ms) {
      if (ms) r[key] = {{"mean", ms->mean}, {"std", ms->std}};
    };
    put_ms("reward", row.reward);
    put_ms("sm", row.sm);
    put_ms("mae", row.mae);
    put_ms("shift_reward", row.shift_reward);
    put_ms("shift_sm", row.shift_sm);
    put_ms("shift_mae", row.shift_mae);
    auto put_d = [&r](const char* key, const std::optional<double>& v) {
      if (v) r[key] = *v;
    };
    put_d("delta_reward_pct", row.delta_reward_pct);
    put_d("delta_sm_pct", row.delta_sm_pct);
    put_d("delta_mae_pct", row.delta_mae_pct);
    r["runs"] = row.run_paths;
    rows.push_back(std::move(r));
  }
  return {{"env", rep.env},
          {"algo", rep.algo},
          {"control_rate_hz", rep.control_rate_hz},
          {"mae_unit", rep.mae_unit},
          {"mae_scale", rep.mae_scale},
          {"rows", rows}};
}

inline ComparisonReport report_from_json(const nlohmann::json& j) {
  for (const char* key : {"env", "algo", "control_rate_hz", "mae_unit", "mae_scale", "rows"})
    if (!j.contains(key)) throw ConfigError(std::string("report: missing '") + key + "'");
  ComparisonReport rep;
  rep.env = j.at("env").get<std::string>();
  rep.algo = j.at("algo").get<std::string>();
  rep.control_rate_hz = j.at("control_rate_hz").get<double>();
  rep.mae_unit = j.at("mae_unit").get<std::string>();
  rep.mae_scale = j.at("mae_scale").get<double>();
  for (const auto& r : j.at("rows")) {
    ComparisonRow row;
    row.label = r.at("label").get<std::string>();
    row.seeds = r.at("seeds").get<std::size_t>();
    row.failures = r.at("failures").get<std::size_t>();
    auto get_ms = [&r](const char* key) -> std::optional<MeanStd> {
      if (!r.contains(key)) return std::nullopt;
      return MeanStd{r.at(key).at("mean").get<double>(), r.at(key).at("std").get<double>()};
    };
    row.reward = get_ms("reward");
    row.sm = get_ms("sm");
    row.mae = get_ms("mae");
    row.shift_reward = get_ms("shift_reward");
    row.shift_sm = get_ms("shift_sm");
    row.shift_mae = get_ms("shift_mae");
    auto get_d = [&r](const char* key) -> std::optional<double> {
      if (!r.contains(key)) return std::nullopt;
      return r.at(key).get<double>();
    };
    row.delta_reward_pct = get_d("delta_reward_pct");
    row.delta_sm_pct = get_d("delta_sm_pct");
    row.delta_mae_pct = get_d("delta_mae_pct");
    if (r.contains("runs"))
      for (const auto& p : r.at("runs")) row.run_paths.push_back(p.get<std::string>());
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace detail {

inline std::string fmt_double(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string fmt_pm(const std::optional<MeanStd>& ms, double scale, int prec) {
  if (!ms) return "-";
  return fmt_double(ms->mean * scale, prec) + " +- " + fmt_double(ms->std * scale, prec);
}

inline std::string fmt_delta(const std::optional<double>& d) {
  if (!d) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.1f%%", *d);
  return buf;
}

}  // namespace detail

/// Plain-text table: reward up is better, sm down is better. Sm cells are
/// scaled by 1e3; MAE cells carry the report's display unit; deltas are
/// percent change against the vanilla row.
inline std::string render_report_text(const ComparisonReport& rep) {
  bool has_mae = false, has_shift = false, has_shift_mae = false, has_delta = false;
  for (const ComparisonRow& row : rep.rows) {
    has_mae = has_mae || row.mae.has_value();
    has_shift = has_shift || row.shift_reward.has_value() || row.shift_sm.has_value();
    has_shift_mae = has_shift_mae || row.shift_mae.has_value();
    has_delta = has_delta || row.delta_reward_pct || row.delta_sm_pct || row.delta_mae_pct;
  }

  std::vector<std::string> header = {"config", "runs", "reward", "sm_x1e3"};
  if (has_mae) header.push_back("mae[" + rep.mae_unit + "]");
  if (has_shift) {
    header.push_back("shift_reward");
    header.push_back("shift_sm_x1e3");
    if (has_shift_mae) header.push_back("shift_mae[" + rep.mae_unit + "]");
  }
  if (has_delta) {
    header.push_back("d_reward");
    header.push_back("d_sm");
    if (has_mae) header.push_back("d_mae");
  }

  std::vector<std::vector<std::string>> table = {header};
  for (const ComparisonRow& row : rep.rows) {
    std::vector<std::string> cells = {row.label};
    cells.push_back(row.failures == 0
                        ? std::to_string(row.seeds)
                        : std::to_string(row.seeds - row.failures) + "/" +
                              std::to_string(row.seeds));
    cells.push_back(detail::fmt_pm(row.reward, 1.0, 3));
    cells.push_back(detail::fmt_pm(row.sm, 1e3, 3));
    if (has_mae) cells.push_back(detail::fmt_pm(row.mae, 1.0, 3));
    if (has_shift) {
      cells.push_back(detail::fmt_pm(row.shift_reward, 1.0, 3));
      cells.push_back(detail::fmt_pm(row.shift_sm, 1e3, 3));
      if (has_shift_mae) cells.push_back(detail::fmt_pm(row.shift_mae, 1.0, 3));
    }
    if (has_delta) {
      cells.push_back(detail::fmt_delta(row.delta_reward_pct));
      cells.push_back(detail::fmt_delta(row.delta_sm_pct));
      if (has_mae) cells.push_back(detail::fmt_delta(row.delta_mae_pct));
    }
    table.push_back(std::move(cells));
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& cells : table)
    for (std::size_t c = 0; c < cells.size(); ++c)
      widths[c] = std::max(widths[c], cells[c].size());

  std::ostringstream out;
  out << "# " << rep.env << " / " << rep.algo << ", smoothness sampled at f_s = "
      << detail::fmt_double(rep.control_rate_hz, 0) << " Hz\n";
  for (const auto& cells : table) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << cells[c];
      if (c + 1 < cells.size())
        out << std::string(widths[c] - cells[c].size() + 2, ' ');
    }
    out << '\n';
  }
  if (has_delta) out << "# deltas: percent change vs the vanilla row\n";
  if (has_mae && rep.env == "quad") out << "# mae converted from rad/s to deg/s\n";
  return out.str();
}

inline void write_report(const ComparisonReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_text_file(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  detail::write_text_file(dir / "report.txt", render_report_text(rep));
}

enum class AblationMode { Vanilla, Temporal, Spatial, Caps };

inline const char* ablation_name(AblationMode m) {
  switch (m) {
    case AblationMode::Vanilla: return "vanilla";
    case AblationMode::Temporal: return "temporal";
    case AblationMode::Spatial: return "spatial";
    case AblationMode::Caps: return "caps";
  }
  throw ConfigError("unknown ablation mode");
}

inline AblationMode ablation_from_name(const std::string& s) {
  if (s == "vanilla") return AblationMode::Vanilla;
  if (s == "temporal") return AblationMode::Temporal;
  if (s == "spatial") return AblationMode::Spatial;
  if (s == "caps") return AblationMode::Caps;
  throw ConfigError("unknown ablation mode: " + s);
}

constexpr AblationMode kAllAblationModes[] = {AblationMode::Vanilla, AblationMode::Temporal,
                                              AblationMode::Spatial, AblationMode::Caps};

/// Masks the base regularization weights: vanilla zeroes both, temporal
/// keeps only lambda_t, spatial keeps only lambda_s, caps keeps both.
inline CapsConfig mask_caps(CapsConfig base, AblationMode m) {
  switch (m) {
    case AblationMode::Vanilla:
      base.lambda_t = 0.0;
      base.lambda_s = 0.0;
      break;
    case AblationMode::Temporal: base.lambda_s = 0.0; break;
    case AblationMode::Spatial: base.lambda_t = 0.0; break;
    case AblationMode::Caps: break;
  }
  return base;
}

/// Runs the config once per mode with masked regularization weights and
/// aggregates the rows into one report, written at the sweep root. Every
/// aggregate stays traceable: row entries point at the per-seed result files.
inline ComparisonReport ablation_sweep(const ExperimentConfig& cfg,
                                       const std::vector<AblationMode>& modes,
                                       const std::filesystem::path& sweep_dir) {
  validate_experiment(cfg);
  if (modes.empty()) throw UsageError("ablation_sweep: no modes requested");
  std::set<std::string> seen;
  for (AblationMode m : modes)
    if (!seen.insert(ablation_name(m)).second)
      throw UsageError("ablation_sweep: duplicate mode");

  std::filesystem::create_directories(sweep_dir);
  detail::write_text_file(sweep_dir / "config.json", experiment_to_json(cfg).dump(2) + "\n");

  std::vector<ComparisonRow> rows;
  for (AblationMode m : modes) {
    const std::string mode = ablation_name(m);
    ExperimentConfig sub = cfg;
    sub.name = cfg.name + "-" + mode;
    sub.caps = mask_caps(cfg.caps, m);
    const std::vector<RunResult> results = run_experiment(sub, sweep_dir / mode, mode + "/");
    rows.push_back(aggregate_row(mode, results));
  }
  ComparisonReport rep = build_report(cfg, std::move(rows));
  write_report(rep, sweep_dir);
  return rep;
}

/// Reads an action log (trajectory CSV with a0..aK columns), scores the
/// action channels, and writes the per-channel spectrum CSV plus the Sm JSON
/// summary. Returns the report so callers can use it directly.
inline SmoothnessReport spectrum_export(const std::string& log_path, double f_s,
                                        const std::string& out_csv, const std::string& out_json) {
  std::ifstream in(log_path);
  if (!in) throw ConfigError("spectrum_export: cannot open " + log_path);

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    return cells;
  };

  std::string line;
  long line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty action log", line_no);
  const std::vector<std::string> header = split(line);
  std::vector<std::size_t> action_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.size() >= 2 && h[0] == 'a' &&
        h.find_first_not_of("0123456789", 1) == std::string::npos)
      action_cols.push_back(c);
  }
  if (action_cols.empty()) throw ParseError("no action columns in log header", line_no);

  std::vector<Vec> channels(action_cols.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) throw ParseError("wrong column count", line_no);
    for (std::size_t i = 0; i < action_cols.size(); ++i) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[action_cols[i]], &used);
        if (used != cells[action_cols[i]].size()) throw std::invalid_argument("trailing junk");
        channels[i].push_back(v);
      } catch (const std::exception&) {
        throw ParseError("bad number in action column", line_no);
      }
    }
  }
  if (channels.front().empty()) throw ParseError("no samples in action log", line_no);

  const SmoothnessReport rep = smoothness(channels, f_s);
  spectrum_to_csv(rep, out_csv);
  detail::write_text_file(out_json, smoothness_to_json(rep).dump(2) + "\n");
  return rep;
}

}  // namespace capslab
