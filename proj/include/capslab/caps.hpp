#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "capslab/errors.hpp"
#include "capslab/matrix.hpp"
#include "capslab/mlp.hpp"
#include "capslab/rng.hpp"

namespace capslab {

/// Weights for the action-smoothness penalties added to a policy objective.
/// lambda_t scales the consecutive-action distance, lambda_s the distance
/// under state perturbation drawn from N(s, sigma^2 I). Both zero means the
/// objective is untouched.
struct CapsConfig {
  double lambda_t = 0.0;
  double lambda_s = 0.0;
  double sigma = 0.0;
  std::size_t perturbations_per_state = 1;

  bool enabled() const { return lambda_t > 0.0 || lambda_s > 0.0; }

  void validate() const {
    if (lambda_t < 0.0 || lambda_s < 0.0 || sigma < 0.0)
      throw ConfigError("CapsConfig: lambda_t, lambda_s, sigma must be non-negative");
    if (perturbations_per_state == 0)
      throw ConfigError("CapsConfig: perturbations_per_state must be at least 1");
  }
};

/// Euclidean distance smoothed inside a tiny ball so the gradient exists at
/// zero: quadratic for d <= delta, d - delta/2 beyond. The offset is far
/// below every tolerance in use.
inline constexpr double kDistanceSmoothingRadius = 1e-8;

struct TemporalLoss {
  double loss = 0.0;
  Vec grad_a;  // d loss / d a
  Vec grad_b;  // d loss / d b
};

inline TemporalLoss temporal_loss(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("temporal_loss: action lengths differ");
  TemporalLoss out;
  out.grad_a.resize(a.size());
  out.grad_b.resize(a.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    out.grad_a[i] = d;
    sq += d * d;
  }
  const double dist = std::sqrt(sq);
  const double delta = kDistanceSmoothingRadius;
  double scale;
  if (dist <= delta) {
    out.loss = sq / (2.0 * delta);
    scale = 1.0 / delta;
  } else {
    out.loss = dist - delta / 2.0;
    scale = 1.0 / dist;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.grad_a[i] *= scale;
    out.grad_b[i] = -out.grad_a[i];
  }
  return out;
}

/// s + N(0, sigma^2 I) from the supplied generator.
inline Vec perturb_state(std::span<const double> s, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ConfigError("perturb_state: sigma must be non-negative");
  Vec out(s.begin(), s.end());
  for (double& v : out) v += sigma * rng.normal();
  return out;
}

struct SpatialLoss {
  double loss = 0.0;
  ParamGrads grads;  // d loss / d policy parameters, through both passes
};

/// Mean distance between the policy's action at s and at perturbed copies of
/// s. Parameter gradients flow through both forward passes.
inline SpatialLoss spatial_loss(const Mlp& policy, std::span<const double> s,
                                const CapsConfig& cfg, Rng& rng) {
  cfg.validate();
  SpatialLoss out;
  out.grads = policy.zero_grads();
  GradientTape tape_s;
  const Vec a = policy.forward(s, tape_s);
  const double inv_k = 1.0 / static_cast<double>(cfg.perturbations_per_state);
  for (std::size_t k = 0; k < cfg.perturbations_per_state; ++k) {
    const Vec sbar = perturb_state(s, cfg.sigma, rng);
    GradientTape tape_p;
    const Vec abar = policy.forward(sbar, tape_p);
    TemporalLoss d = temporal_loss(a, abar);
    out.loss += inv_k * d.loss;
    for (double& g : d.grad_a) g *= inv_k;
    for (double& g : d.grad_b) g *= inv_k;
    policy.backward(tape_s, d.grad_a, out.grads);
    policy.backward(tape_p, d.grad_b, out.grads);
  }
  return out;
}

struct ValueGrad {
  double value = 0.0;
  ParamGrads grad;
};

/// Objective J minus the weighted smoothness penalties, with the gradient
/// combined by the same linear rule.
inline ValueGrad caps_objective(const ValueGrad& j, const ValueGrad& l_t, const ValueGrad& l_s,
                                const CapsConfig& cfg) {
  cfg.validate();
  ValueGrad out;
  out.value = j.value - cfg.lambda_t * l_t.value - cfg.lambda_s * l_s.value;
  out.grad = j.grad;
  out.grad.axpy(-cfg.lambda_t, l_t.grad);
  out.grad.axpy(-cfg.lambda_s, l_s.grad);
  return out;
}

}  // namespace capslab
