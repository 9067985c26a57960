#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "capslab/env.hpp"
#include "capslab/rng.hpp"

namespace capslab {

struct PendulumState {
  double theta = 0.0;      // radians, 0 = upright, wrapped to [-pi, pi]
  double theta_dot = 0.0;  // rad/s, clamped to +-max_speed
  std::size_t step = 0;
};

/// Torque-limited swing-up mirroring the classic benchmark: rod pivoted at
/// one end, semi-implicit Euler at 20 Hz, cost on the pre-step state.
class Pendulum final : public Env {
 public:
  struct Params {
    double gravity = 10.0;
    double mass = 1.0;
    double length = 1.0;
    double dt = 0.05;
    double max_torque = 2.0;
    double max_speed = 8.0;
    std::size_t horizon = 200;
  };

  Pendulum() : Pendulum(Params{}) {}
  explicit Pendulum(Params p) : p_(p) {}

  std::size_t obs_size() const override { return 3; }
  std::size_t action_size() const override { return 1; }
  double action_bound() const override { return p_.max_torque; }
  std::size_t horizon() const override { return p_.horizon; }
  double control_rate_hz() const override { return 1.0 / p_.dt; }

  Vec reset(std::uint64_t seed) override {
    Rng rng(seed);
    st_.theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
    st_.theta_dot = rng.uniform(-1.0, 1.0);
    st_.step = 0;
    return observation();
  }

  /// Deterministic start for scripted checks.
  Vec reset_to(double theta, double theta_dot) {
    st_.theta = wrap(theta);
    st_.theta_dot = std::clamp(theta_dot, -p_.max_speed, p_.max_speed);
    st_.step = 0;
    return observation();
  }

  StepResult step(const Vec& action) override {
    if (action.size() != 1) throw ShapeError("Pendulum::step: torque must have 1 component");
    if (!std::isfinite(action[0])) throw EnvFault("Pendulum::step: non-finite torque");
    const double u = std::clamp(action[0], -p_.max_torque, p_.max_torque);

    StepResult res;
    res.reward = -(st_.theta * st_.theta + 0.1 * st_.theta_dot * st_.theta_dot + 0.001 * u * u);

    const double accel = 1.5 * p_.gravity / p_.length * std::sin(st_.theta) +
                         3.0 / (p_.mass * p_.length * p_.length) * u;
    st_.theta_dot = std::clamp(st_.theta_dot + p_.dt * accel, -p_.max_speed, p_.max_speed);
    st_.theta = wrap(st_.theta + p_.dt * st_.theta_dot);
    ++st_.step;

    res.obs = observation();
    res.done = st_.step >= p_.horizon;
    return res;
  }

  const PendulumState& state() const { return st_; }

  static double wrap(double angle) { return std::remainder(angle, 2.0 * std::numbers::pi); }

 private:
  Vec observation() const {
    return {std::cos(st_.theta), std::sin(st_.theta), st_.theta_dot / p_.max_speed};
  }

  Params p_;
  PendulumState st_;
};

}  // namespace capslab
