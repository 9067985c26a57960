#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "capslab/errors.hpp"
#include "capslab/matrix.hpp"
#include "capslab/mlp.hpp"

namespace capslab {

/// Adam moment buffers for one network. One state per network; step count is
/// shared across layers so bias correction stays consistent.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vec> m_b, v_b;

  static AdamState for_net(const Mlp& net, double lr) {
    AdamState st;
    st.lr = lr;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      st.m_w.emplace_back(net.weight(l).rows(), net.weight(l).cols());
      st.v_w.emplace_back(net.weight(l).rows(), net.weight(l).cols());
      st.m_b.emplace_back(net.bias(l).size(), 0.0);
      st.v_b.emplace_back(net.bias(l).size(), 0.0);
    }
    return st;
  }
};

/// Scales grads in place so the global norm does not exceed `max_norm`.
inline void clip_global_norm(ParamGrads& grads, double max_norm = 10.0) {
  const double norm = grads.global_norm();
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
}

/// One Adam update with bias correction. Throws TrainingError naming the
/// first offending layer if any gradient entry is non-finite.
inline void adam_step(Mlp& net, const ParamGrads& grads, AdamState& st) {
  if (grads.w.size() != net.num_layers())
    throw ShapeError("adam_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < grads.w.size(); ++l) {
    if (!grads.w[l].all_finite() || !all_finite(grads.b[l]))
      throw TrainingError("adam_step: non-finite gradient in layer " + std::to_string(l));
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t l = 0; l < grads.w.size(); ++l) {
    Matrix& w = net.mutable_weight(l);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads.w[l].data()[i];
      double& m = st.m_w[l].data()[i];
      double& v = st.v_w[l].data()[i];
      m = st.beta1 * m + (1.0 - st.beta1) * g;
      v = st.beta2 * v + (1.0 - st.beta2) * g * g;
      w.data()[i] -= st.lr * (m / bc1) / (std::sqrt(v / bc2) + st.eps);
    }
    Vec& b = net.mutable_bias(l);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double g = grads.b[l][i];
      double& m = st.m_b[l][i];
      double& v = st.v_b[l][i];
      m = st.beta1 * m + (1.0 - st.beta1) * g;
      v = st.beta2 * v + (1.0 - st.beta2) * g * g;
      b[i] -= st.lr * (m / bc1) / (std::sqrt(v / bc2) + st.eps);
    }
  }
}

/// Adam for a free-standing parameter vector (e.g. a trainable log-std).
struct AdamVec {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  Vec m, v;

  explicit AdamVec(std::size_t n = 0, double lr_ = 1e-3) : lr(lr_), m(n, 0.0), v(n, 0.0) {}

  void update(Vec& params, const Vec& grads) {
    if (params.size() != m.size() || grads.size() != m.size())
      throw ShapeError("AdamVec::update: size mismatch");
    if (!all_finite(grads)) throw TrainingError("AdamVec::update: non-finite gradient");
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

/// Polyak update: target = rho * target + (1 - rho) * live.
inline void polyak_update(Mlp& target, const Mlp& live, double rho) {
  if (target.num_layers() != live.num_layers())
    throw ShapeError("polyak_update: layer count mismatch");
  for (std::size_t l = 0; l < live.num_layers(); ++l) {
    Matrix& tw = target.mutable_weight(l);
    const Matrix& lw = live.weight(l);
    if (!tw.same_shape(lw)) throw ShapeError("polyak_update: weight shape mismatch");
    for (std::size_t i = 0; i < tw.size(); ++i)
      tw.data()[i] = rho * tw.data()[i] + (1.0 - rho) * lw.data()[i];
    Vec& tb = target.mutable_bias(l);
    const Vec& lb = live.bias(l);
    for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = rho * tb[i] + (1.0 - rho) * lb[i];
  }
}

}  // namespace capslab
