#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "capslab/env.hpp"
#include "capslab/schedule.hpp"

namespace capslab {

struct ToyTrackState {
  double c = 0.0;  // controlled position
  double g = 0.0;  // goal
  std::size_t step = 0;
};

/// 1-D goal tracking: the position integrates the action, the agent sees
/// only the disparity s = g - c. The map a = s is exactly optimal whenever
/// the gap fits inside the action bound.
class ToyTrack final : public Env {
 public:
  struct Params {
    double a_max = 2.0;
    std::size_t horizon = 500;
    std::size_t min_hold = 50;
    std::size_t max_hold = 100;
    double goal_lo = -1.0;
    double goal_hi = 1.0;
    std::optional<GoalSchedule> fixed_schedule;  // overrides the seeded one
  };

  ToyTrack() : ToyTrack(Params{}) {}
  explicit ToyTrack(Params p) : p_(std::move(p)) {}

  std::size_t obs_size() const override { return 1; }
  std::size_t action_size() const override { return 1; }
  double action_bound() const override { return p_.a_max; }
  std::size_t horizon() const override { return p_.horizon; }
  double control_rate_hz() const override { return 1.0; }  // nominal, unitless plant

  Vec reset(std::uint64_t seed) override {
    schedule_ = p_.fixed_schedule
                    ? *p_.fixed_schedule
                    : GoalSchedule::random_steps(seed, p_.horizon, p_.min_hold, p_.max_hold,
                                                 p_.goal_lo, p_.goal_hi);
    st_ = ToyTrackState{0.0, schedule_.value_at(0), 0};
    return observation();
  }

  StepResult step(const Vec& action) override {
    if (action.size() != 1) throw ShapeError("ToyTrack::step: action must have 1 component");
    if (!std::isfinite(action[0])) throw EnvFault("ToyTrack::step: non-finite action");
    const double a = std::clamp(action[0], -p_.a_max, p_.a_max);
    st_.c += a;
    ++st_.step;
    st_.g = schedule_.value_at(st_.step);
    StepResult res;
    res.obs = observation();
    res.reward = -std::fabs(res.obs[0]);
    res.done = st_.step >= p_.horizon;
    return res;
  }

  Vec tracking_error() const override { return {st_.g - st_.c}; }
  const ToyTrackState& state() const { return st_; }
  const GoalSchedule& schedule() const { return schedule_; }

 private:
  Vec observation() const { return {st_.g - st_.c}; }

  Params p_;
  GoalSchedule schedule_;
  ToyTrackState st_;
};

}  // namespace capslab
