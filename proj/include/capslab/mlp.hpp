#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "capslab/errors.hpp"
#include "capslab/matrix.hpp"
#include "capslab/rng.hpp"

namespace capslab {

enum class Activation { Tanh, ReLU, Identity };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
  }
  throw ConfigError("unknown activation");
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation name: " + s);
}

inline double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  return z;
}

/// Derivative in terms of the pre-activation z.
inline double activation_grad(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

/// Per-layer parameter gradients with the vector algebra training needs.
struct ParamGrads {
  std::vector<Matrix> w;
  std::vector<Vec> b;

  void scale(double s) {
    for (auto& m : w)
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] *= s;
    for (auto& v : b)
      for (double& x : v) x *= s;
  }

  /// this += s * other
  void axpy(double s, const ParamGrads& other) {
    if (w.size() != other.w.size()) throw ShapeError("axpy: layer count mismatch");
    for (std::size_t l = 0; l < w.size(); ++l) {
      if (!w[l].same_shape(other.w[l])) throw ShapeError("axpy: weight shape mismatch");
      for (std::size_t i = 0; i < w[l].size(); ++i) w[l].data()[i] += s * other.w[l].data()[i];
      for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += s * other.b[l][i];
    }
  }

  double global_norm() const {
    double sq = 0.0;
    for (const auto& m : w)
      for (std::size_t i = 0; i < m.size(); ++i) sq += m.data()[i] * m.data()[i];
    for (const auto& v : b)
      for (double x : v) sq += x * x;
    return std::sqrt(sq);
  }

  bool all_finite() const {
    for (const auto& m : w)
      if (!m.all_finite()) return false;
    for (const auto& v : b)
      if (!capslab::all_finite(v)) return false;
    return true;
  }
};

/// Activations cached by one forward pass, consumed by backward. A tape is
/// valid only for the network instance and parameter version it was recorded
/// against; backward on a stale tape throws UsageError.
struct GradientTape {
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
  Vec input;
  std::vector<Vec> pre;   // pre-activation per layer
  std::vector<Vec> post;  // post-activation per layer (last = output)
};

/// Fully connected network, 64-bit floats, explicit reverse-mode backprop.
class Mlp {
 public:
  Mlp() : id_(next_id()) {}

  /// Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.
  static Mlp init(const std::vector<std::size_t>& layer_sizes, Activation hidden,
                  Activation output, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ConfigError("Mlp::init: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
      if (s == 0) throw ConfigError("Mlp::init: zero-width layer");
    Mlp net;
    net.hidden_act_ = hidden;
    net.output_act_ = output;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      const std::size_t fan_in = layer_sizes[l];
      const std::size_t fan_out = layer_sizes[l + 1];
      Matrix w(fan_out, fan_in);
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
      net.weights_.push_back(std::move(w));
      net.biases_.emplace_back(fan_out, 0.0);
    }
    return net;
  }

  std::size_t num_layers() const { return weights_.size(); }
  std::size_t input_size() const { return weights_.front().cols(); }
  std::size_t output_size() const { return weights_.back().rows(); }
  Activation hidden_activation() const { return hidden_act_; }
  Activation output_activation() const { return output_act_; }
  std::uint64_t version() const { return version_; }

  const Matrix& weight(std::size_t l) const { return weights_[l]; }
  const Vec& bias(std::size_t l) const { return biases_[l]; }

  /// Direct mutable access bumps the parameter version: outstanding tapes
  /// become stale.
  Matrix& mutable_weight(std::size_t l) {
    ++version_;
    return weights_[l];
  }
  Vec& mutable_bias(std::size_t l) {
    ++version_;
    return biases_[l];
  }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s;
    s.push_back(weights_.front().cols());
    for (const auto& w : weights_) s.push_back(w.rows());
    return s;
  }

  ParamGrads zero_grads() const {
    ParamGrads g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.w.emplace_back(weights_[l].rows(), weights_[l].cols());
      g.b.emplace_back(biases_[l].size(), 0.0);
    }
    return g;
  }

  Vec forward(std::span<const double> x) const {
    GradientTape tape;
    return forward(x, tape);
  }

  Vec forward(std::span<const double> x, GradientTape& tape) const {
    if (x.size() != input_size()) throw ShapeError("Mlp::forward: input size mismatch");
    tape.net_id = id_;
    tape.version = version_;
    tape.input.assign(x.begin(), x.end());
    tape.pre.assign(weights_.size(), {});
    tape.post.assign(weights_.size(), {});
    const Vec* cur = &tape.input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      matvec(weights_[l], *cur, tape.pre[l]);
      for (std::size_t i = 0; i < tape.pre[l].size(); ++i) tape.pre[l][i] += biases_[l][i];
      const Activation act = (l + 1 == weights_.size()) ? output_act_ : hidden_act_;
      tape.post[l].resize(tape.pre[l].size());
      for (std::size_t i = 0; i < tape.pre[l].size(); ++i)
        tape.post[l][i] = apply_activation(act, tape.pre[l][i]);
      cur = &tape.post[l];
    }
    return tape.post.back();
  }

  /// Accumulates parameter gradients into `grads` and returns dLoss/dInput.
  Vec backward(const GradientTape& tape, std::span<const double> out_grad,
               ParamGrads& grads) const {
    if (tape.net_id != id_ || tape.version != version_)
      throw UsageError("Mlp::backward: tape is stale (parameters changed since forward)");
    if (out_grad.size() != output_size()) throw ShapeError("Mlp::backward: output grad size mismatch");
    if (grads.w.size() != weights_.size()) throw ShapeError("Mlp::backward: grad accumulator layer mismatch");

    Vec delta(out_grad.begin(), out_grad.end());
    for (std::size_t li = weights_.size(); li-- > 0;) {
      const Activation act = (li + 1 == weights_.size()) ? output_act_ : hidden_act_;
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] *= activation_grad(act, tape.pre[li][i]);
      const Vec& layer_in = (li == 0) ? tape.input : tape.post[li - 1];
      outer_acc(delta, layer_in, grads.w[li]);
      for (std::size_t i = 0; i < delta.size(); ++i) grads.b[li][i] += delta[i];
      if (li > 0) {
        Vec prev(weights_[li].cols(), 0.0);
        matvec_transpose_acc(weights_[li], delta, prev);
        delta = std::move(prev);
      } else {
        Vec in_grad(weights_[0].cols(), 0.0);
        matvec_transpose_acc(weights_[0], delta, in_grad);
        return in_grad;
      }
    }
    throw UsageError("Mlp::backward: empty network");
  }

  bool params_equal(const Mlp& other) const {
    return weights_ == other.weights_ && biases_ == other.biases_ &&
           hidden_act_ == other.hidden_act_ && output_act_ == other.output_act_;
  }

  /// Text checkpoint with hexfloat parameters: reload reproduces every bit.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("Mlp::save: cannot open " + path);
    out << "capslab-mlp 1\n";
    const auto sizes = layer_sizes();
    out << "layers";
    for (std::size_t s : sizes) out << ' ' << s;
    out << '\n';
    out << "activations " << activation_name(hidden_act_) << ' ' << activation_name(output_act_)
        << '\n';
    char buf[64];
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (std::size_t i = 0; i < weights_[l].size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", weights_[l].data()[i]);
        out << buf << '\n';
      }
      for (double v : biases_[l]) {
        std::snprintf(buf, sizeof buf, "%a", v);
        out << buf << '\n';
      }
    }
    if (!out) throw ConfigError("Mlp::save: write failed for " + path);
  }

  static Mlp load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("Mlp::load: cannot open " + path);
    long line_no = 0;
    std::string line;
    auto next_line = [&]() {
      if (!std::getline(in, line)) throw ParseError("unexpected end of checkpoint", line_no + 1);
      ++line_no;
      return line;
    };
    if (next_line() != "capslab-mlp 1") throw ParseError("bad checkpoint header", line_no);

    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag;
    if (tag != "layers") throw ParseError("expected layer sizes", line_no);
    std::vector<std::size_t> sizes;
    std::size_t s;
    while (ls >> s) sizes.push_back(s);
    if (sizes.size() < 2) throw ParseError("checkpoint needs at least two layer sizes", line_no);

    std::istringstream as(next_line());
    std::string hidden_name, output_name;
    as >> tag >> hidden_name >> output_name;
    if (tag != "activations") throw ParseError("expected activations", line_no);

    Mlp net;
    net.hidden_act_ = activation_from_name(hidden_name);
    net.output_act_ = activation_from_name(output_name);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      Matrix w(sizes[l + 1], sizes[l]);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const std::string& tok = next_line();
        w.data()[i] = std::strtod(tok.c_str(), nullptr);
      }
      Vec b(sizes[l + 1], 0.0);
      for (double& v : b) {
        const std::string& tok = next_line();
        v = std::strtod(tok.c_str(), nullptr);
      }
      net.weights_.push_back(std::move(w));
      net.biases_.push_back(std::move(b));
    }
    return net;
  }

 private:
  static std::uint64_t next_id() {
    static std::uint64_t counter = 0;
    return ++counter;
  }

  std::uint64_t id_;
  std::uint64_t version_ = 0;
  Activation hidden_act_ = Activation::Tanh;
  Activation output_act_ = Activation::Identity;
  std::vector<Matrix> weights_;
  std::vector<Vec> biases_;
};

}  // namespace capslab
