#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "capslab/errors.hpp"
#include "capslab/matrix.hpp"

namespace capslab {

struct StepResult {
  Vec obs;
  double reward = 0.0;
  bool done = false;
};

/// Common control-loop surface. Implementations are deterministic: the same
/// reset seed and action sequence reproduce a trajectory bit for bit.
class Env {
 public:
  virtual ~Env() = default;
  virtual std::size_t obs_size() const = 0;
  virtual std::size_t action_size() const = 0;
  /// Symmetric native action bound; agents act in [-1,1] and are scaled.
  virtual double action_bound() const = 0;
  virtual std::size_t horizon() const = 0;
  /// Control rate used as the sampling frequency of action spectra.
  virtual double control_rate_hz() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vec& action) = 0;
  /// Setpoint-minus-measurement in native units; empty when the task has no
  /// tracking target.
  virtual Vec tracking_error() const { return {}; }
};

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> steps;
  double gamma = 0.99;
};

/// Runs one episode under a deterministic policy mapping observation to
/// native action. max_steps = 0 means run to the environment's horizon.
inline Trajectory rollout(Env& env, const std::function<Vec(const Vec&)>& policy,
                          std::uint64_t seed, std::size_t max_steps = 0) {
  Trajectory traj;
  Vec obs = env.reset(seed);
  const std::size_t limit = max_steps == 0 ? env.horizon() : max_steps;
  for (std::size_t t = 0; t < limit; ++t) {
    Transition tr;
    tr.s = obs;
    tr.a = policy(obs);
    StepResult res = env.step(tr.a);
    tr.r = res.reward;
    tr.s_next = res.obs;
    tr.done = res.done;
    obs = std::move(res.obs);
    traj.steps.push_back(std::move(tr));
    if (traj.steps.back().done) break;
  }
  return traj;
}

/// CSV columns: step, s0.., a0.., reward. Doubles at full precision so logs
/// round-trip exactly.
inline void trajectory_to_csv(const Trajectory& traj, std::ostream& out) {
  if (traj.steps.empty()) throw UsageError("trajectory_to_csv: empty trajectory");
  const std::size_t sdim = traj.steps.front().s.size();
  const std::size_t adim = traj.steps.front().a.size();
  out << "step";
  for (std::size_t i = 0; i < sdim; ++i) out << ",s" << i;
  for (std::size_t i = 0; i < adim; ++i) out << ",a" << i;
  out << ",reward\n";
  out.precision(17);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    out << t;
    for (double v : traj.steps[t].s) out << ',' << v;
    for (double v : traj.steps[t].a) out << ',' << v;
    out << ',' << traj.steps[t].r << '\n';
  }
}

inline void trajectory_to_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("trajectory_to_csv: cannot open " + path);
  trajectory_to_csv(traj, out);
}

}  // namespace capslab
