#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "capslab/caps.hpp"
#include "capslab/errors.hpp"
#include "capslab/matrix.hpp"
#include "capslab/mlp.hpp"
#include "capslab/rng.hpp"

// Batch training objectives with analytic gradients. The learners call these
// for their update steps, and the gradient checks differentiate the very same
// functions numerically, so agreement here certifies the code the agents run.
// Batch element access is a callable so replay buffers, rollout arrays and
// test fixtures all plug in without copies.

namespace capslab {

inline Vec concat_obs_action(const Vec& s, const Vec& a) {
  Vec sa;
  sa.reserve(s.size() + a.size());
  sa.insert(sa.end(), s.begin(), s.end());
  sa.insert(sa.end(), a.begin(), a.end());
  return sa;
}

/// Mean squared error of a scalar-output net against fixed targets:
/// (1/B) sum_i (net(x_i) - y_i)^2, gradient w.r.t. the net parameters.
template <class InputFn>
ValueGrad mse_objective(const Mlp& net, std::size_t batch, InputFn input_at, const Vec& targets) {
  if (batch == 0) throw UsageError("mse_objective: empty batch");
  if (targets.size() != batch) throw ShapeError("mse_objective: target count mismatch");
  ValueGrad out;
  out.grad = net.zero_grads();
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    GradientTape tape;
    const double v = net.forward(input_at(i), tape)[0];
    const double err = v - targets[i];
    out.value += err * err * inv_b;
    net.backward(tape, Vec{2.0 * err * inv_b}, out.grad);
  }
  return out;
}

/// Mean critic value of the deterministic policy's actions:
/// (1/B) sum_i Q(s_i, pi(s_i)), gradient w.r.t. the policy parameters only
/// (the critic is held fixed).
template <class StateFn>
ValueGrad deterministic_q_objective(const Mlp& policy, const Mlp& critic, std::size_t batch,
                                    StateFn state_at) {
  if (batch == 0) throw UsageError("deterministic_q_objective: empty batch");
  ValueGrad out;
  out.grad = policy.zero_grads();
  ParamGrads critic_scratch = critic.zero_grads();
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const Vec& s = state_at(i);
    GradientTape tape_a;
    const Vec a = policy.forward(s, tape_a);
    GradientTape tape_q;
    const Vec q = critic.forward(concat_obs_action(s, a), tape_q);
    out.value += q[0] * inv_b;
    const Vec in_grad = critic.backward(tape_q, Vec{inv_b}, critic_scratch);
    const Vec a_grad(in_grad.begin() + static_cast<std::ptrdiff_t>(s.size()), in_grad.end());
    policy.backward(tape_a, a_grad, out.grad);
  }
  return out;
}

/// Mean action distance between consecutive states:
/// (1/B) sum_i D(pi(s_i), pi(s'_i)), gradients through both evaluations.
/// pair_at(i) returns the (state, successor) pair for batch slot i.
template <class PairFn>
ValueGrad policy_temporal_objective(const Mlp& policy, std::size_t batch, PairFn pair_at) {
  if (batch == 0) throw UsageError("policy_temporal_objective: empty batch");
  ValueGrad out;
  out.grad = policy.zero_grads();
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& [s, s_next] = pair_at(i);
    GradientTape tape_now, tape_next;
    const Vec a_now = policy.forward(s, tape_now);
    const Vec a_next = policy.forward(s_next, tape_next);
    TemporalLoss tl = temporal_loss(a_now, a_next);
    out.value += tl.loss * inv_b;
    for (double& g : tl.grad_a) g *= inv_b;
    for (double& g : tl.grad_b) g *= inv_b;
    policy.backward(tape_now, tl.grad_a, out.grad);
    policy.backward(tape_next, tl.grad_b, out.grad);
  }
  return out;
}

/// Mean action distance under state perturbation:
/// (1/B) sum_i D(pi(s_i), pi(s_i + sigma * eps)). Draws come from `rng` in
/// batch order, so replaying with an equally seeded generator reproduces the
/// value exactly.
template <class StateFn>
ValueGrad policy_spatial_objective(const Mlp& policy, std::size_t batch, StateFn state_at,
                                   const CapsConfig& cfg, Rng& rng) {
  if (batch == 0) throw UsageError("policy_spatial_objective: empty batch");
  ValueGrad out;
  out.grad = policy.zero_grads();
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    SpatialLoss sl = spatial_loss(policy, state_at(i), cfg, rng);
    out.value += sl.loss * inv_b;
    out.grad.axpy(inv_b, sl.grads);
  }
  return out;
}

}  // namespace capslab
