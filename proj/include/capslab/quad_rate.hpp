#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include "capslab/env.hpp"
#include "capslab/rng.hpp"
#include "capslab/schedule.hpp"

namespace capslab {

struct QuadRateState {
  std::array<double, 3> omega{0.0, 0.0, 0.0};     // body rates rad/s
  std::array<double, 4> motors{0.0, 0.0, 0.0, 0.0};  // normalized speeds [0,1]
  std::array<double, 3> setpoint{0.0, 0.0, 0.0};  // commanded rates rad/s
  std::array<double, 4> prev_cmd{0.0, 0.0, 0.0, 0.0};
  std::size_t step = 0;
};

/// Evaluation-time dynamics perturbation: multiplicative inertia and motor
/// time-constant scaling plus additive observation noise.
struct DomainShift {
  double inertia_range = 0.2;  // per-axis scale U(1-r, 1+r)
  double tau_range = 0.5;
  double obs_noise = 0.05;
};

/// 3-axis angular-rate tracker at 1 kHz: four motors behind a first-order
/// lag drive a fixed mixer; rigid-body rotation with diagonal inertia. No
/// translation or aerodynamics, just the actuation path.
class QuadRate final : public Env {
 public:
  struct Params {
    std::array<double, 3> inertia{0.005, 0.005, 0.009};  // kg m^2
    double motor_tau = 0.02;                             // s
    double dt = 0.001;                                   // s
    double k_roll = 0.1, k_pitch = 0.1, k_yaw = 0.02;    // mixer torque gains
    std::size_t horizon = 10000;
    double divergence_limit = 50.0;   // rad/s
    double divergence_penalty = -10.0;
    std::size_t min_hold = 500, max_hold = 2000;  // setpoint hold, steps
    double rp_range = 5.0;   // roll/pitch setpoints U(-r, r) rad/s
    double yaw_range = 2.0;  // yaw setpoints U(-r, r) rad/s
    std::optional<DomainShift> shift;
  };

  QuadRate() : QuadRate(Params{}) {}
  explicit QuadRate(Params p) : p_(std::move(p)) {}

  std::size_t obs_size() const override { return 10; }
  std::size_t action_size() const override { return 4; }
  double action_bound() const override { return 1.0; }
  std::size_t horizon() const override { return p_.horizon; }
  double control_rate_hz() const override { return 1.0 / p_.dt; }

  Vec reset(std::uint64_t seed) override {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const double range = axis < 2 ? p_.rp_range : p_.yaw_range;
      schedules_[axis] = GoalSchedule::random_steps(Rng::derive(seed, axis), p_.horizon,
                                                    p_.min_hold, p_.max_hold, -range, range);
    }
    inertia_eff_ = p_.inertia;
    tau_eff_ = p_.motor_tau;
    if (p_.shift) {
      Rng shift_rng(Rng::derive(seed, 100));
      for (double& i : inertia_eff_)
        i *= shift_rng.uniform(1.0 - p_.shift->inertia_range, 1.0 + p_.shift->inertia_range);
      tau_eff_ *= shift_rng.uniform(1.0 - p_.shift->tau_range, 1.0 + p_.shift->tau_range);
      noise_rng_ = Rng(Rng::derive(seed, 101));
    }
    st_ = QuadRateState{};
    for (std::size_t axis = 0; axis < 3; ++axis) st_.setpoint[axis] = schedules_[axis].value_at(0);
    return observation();
  }

  StepResult step(const Vec& action) override {
    if (action.size() != 4) throw ShapeError("QuadRate::step: command must have 4 components");
    for (double v : action)
      if (!std::isfinite(v)) throw EnvFault("QuadRate::step: non-finite motor command");

    for (std::size_t i = 0; i < 4; ++i) {
      const double cmd = std::clamp(action[i], -1.0, 1.0);
      st_.prev_cmd[i] = cmd;
      const double target = (cmd + 1.0) / 2.0;
      st_.motors[i] =
          std::clamp(st_.motors[i] + p_.dt / tau_eff_ * (target - st_.motors[i]), 0.0, 1.0);
    }

    const std::array<double, 3> torque = mixer_torque(st_.motors);
    // omega_dot = I^-1 (torque - omega x I omega), diagonal inertia
    const double ix = inertia_eff_[0], iy = inertia_eff_[1], iz = inertia_eff_[2];
    const double wx = st_.omega[0], wy = st_.omega[1], wz = st_.omega[2];
    const std::array<double, 3> gyro{wy * iz * wz - wz * iy * wy, wz * ix * wx - wx * iz * wz,
                                     wx * iy * wy - wy * ix * wx};
    for (std::size_t axis = 0; axis < 3; ++axis)
      st_.omega[axis] += p_.dt * (torque[axis] - gyro[axis]) / inertia_eff_[axis];

    ++st_.step;
    for (std::size_t axis = 0; axis < 3; ++axis)
      st_.setpoint[axis] = schedules_[axis].value_at(st_.step);

    StepResult res;
    res.obs = observation();
    for (double w : st_.omega) {
      if (std::fabs(w) > p_.divergence_limit) {
        res.reward = p_.divergence_penalty;
        res.done = true;
        return res;
      }
    }
    double abs_err = 0.0;
    for (std::size_t axis = 0; axis < 3; ++axis)
      abs_err += std::fabs(st_.setpoint[axis] - st_.omega[axis]);
    res.reward = -abs_err / 3.0 / 5.0;
    res.done = st_.step >= p_.horizon;
    return res;
  }

  Vec tracking_error() const override {
    return {st_.setpoint[0] - st_.omega[0], st_.setpoint[1] - st_.omega[1],
            st_.setpoint[2] - st_.omega[2]};
  }

  const QuadRateState& state() const { return st_; }
  const std::array<double, 3>& effective_inertia() const { return inertia_eff_; }
  double effective_motor_tau() const { return tau_eff_; }

  std::array<double, 3> mixer_torque(const std::array<double, 4>& m) const {
    return {p_.k_roll * (-m[0] - m[1] + m[2] + m[3]), p_.k_pitch * (m[0] - m[1] + m[2] - m[3]),
            p_.k_yaw * (m[0] - m[1] - m[2] + m[3])};
  }

 private:
  Vec observation() {
    Vec obs(10);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      obs[axis] = st_.setpoint[axis] - st_.omega[axis];
      obs[3 + axis] = st_.omega[axis];
    }
    for (std::size_t i = 0; i < 4; ++i) obs[6 + i] = st_.prev_cmd[i];
    if (p_.shift && p_.shift->obs_noise > 0.0)
      for (double& v : obs) v += p_.shift->obs_noise * noise_rng_.normal();
    return obs;
  }

  Params p_;
  std::array<GoalSchedule, 3> schedules_;
  std::array<double, 3> inertia_eff_{0.005, 0.005, 0.009};
  double tau_eff_ = 0.02;
  Rng noise_rng_{0};
  QuadRateState st_;
};

}  // namespace capslab
