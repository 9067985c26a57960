#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "capslab/adam.hpp"
#include "capslab/matrix.hpp"
#include "capslab/mlp.hpp"
#include "capslab/rng.hpp"

using namespace capslab;

namespace {

Mlp make_hand_net() {
  // 1 -> 2 -> 1, tanh everywhere, fixed parameters.
  Mlp net = Mlp::init({1, 2, 1}, Activation::Tanh, Activation::Tanh, 0);
  Matrix& w1 = net.mutable_weight(0);
  w1(0, 0) = 0.3;
  w1(1, 0) = -0.2;
  Vec& b1 = net.mutable_bias(0);
  b1[0] = 0.1;
  b1[1] = 0.05;
  Matrix& w2 = net.mutable_weight(1);
  w2(0, 0) = 0.4;
  w2(0, 1) = -0.1;
  net.mutable_bias(1)[0] = 0.2;
  return net;
}

double directional_loss(const Mlp& net, const Vec& x, const Vec& c) {
  Vec y = net.forward(x);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += c[i] * y[i];
  return loss;
}

}  // namespace

TEST_CASE("identity single layer is a plain affine map") {
  Mlp net = Mlp::init({2, 2}, Activation::Tanh, Activation::Identity, 7);
  Matrix& w = net.mutable_weight(0);
  w(0, 0) = 1.0;
  w(0, 1) = 2.0;
  w(1, 0) = -3.0;
  w(1, 1) = 0.5;
  net.mutable_bias(0) = {0.25, -1.0};
  Vec y = net.forward(Vec{2.0, -1.0});
  CHECK(y[0] == 2.0 * 1.0 + (-1.0) * 2.0 + 0.25);
  CHECK(y[1] == 2.0 * (-3.0) + (-1.0) * 0.5 - 1.0);
}

TEST_CASE("forward rejects wrong input width") {
  Mlp net = Mlp::init({3, 4, 2}, Activation::Tanh, Activation::Identity, 1);
  CHECK_THROWS_AS(net.forward(Vec{1.0, 2.0}), ShapeError);
}

TEST_CASE("two layer tanh net reproduces hand-computed output") {
  Mlp net = make_hand_net();
  Vec y = net.forward(Vec{1.0});
  CHECK(y[0] == Catch::Approx(0.35124922947209730585).epsilon(0).margin(1e-15));
}

TEST_CASE("linear layer weight gradient is the outer product") {
  Mlp net = Mlp::init({3, 2}, Activation::Tanh, Activation::Identity, 3);
  Vec x{0.5, -1.5, 2.0};
  Vec g{2.0, -0.5};
  GradientTape tape;
  net.forward(x, tape);
  ParamGrads grads = net.zero_grads();
  Vec in_grad = net.backward(tape, g, grads);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(grads.w[0](r, c) == g[r] * x[c]);
  CHECK(grads.b[0][0] == g[0]);
  CHECK(grads.b[0][1] == g[1]);
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(in_grad[c] == Catch::Approx(net.weight(0)(0, c) * g[0] + net.weight(0)(1, c) * g[1]));
}

TEST_CASE("backprop matches central finite differences") {
  Mlp net = Mlp::init({3, 5, 4, 2}, Activation::Tanh, Activation::Identity, 42);
  Rng rng(99);
  Vec x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Vec c{rng.uniform(-1, 1), rng.uniform(-1, 1)};

  GradientTape tape;
  net.forward(x, tape);
  ParamGrads grads = net.zero_grads();
  Vec in_grad = net.backward(tape, c, grads);

  const double h = 1e-5;
  auto check_close = [](double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    CHECK(std::fabs(analytic - numeric) / denom < 1e-4);
  };

  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (std::size_t i = 0; i < net.weight(l).size(); ++i) {
      const double orig = net.weight(l).data()[i];
      net.mutable_weight(l).data()[i] = orig + h;
      const double up = directional_loss(net, x, c);
      net.mutable_weight(l).data()[i] = orig - h;
      const double dn = directional_loss(net, x, c);
      net.mutable_weight(l).data()[i] = orig;
      check_close(grads.w[l].data()[i], (up - dn) / (2 * h));
    }
    for (std::size_t i = 0; i < net.bias(l).size(); ++i) {
      const double orig = net.bias(l)[i];
      net.mutable_bias(l)[i] = orig + h;
      const double up = directional_loss(net, x, c);
      net.mutable_bias(l)[i] = orig - h;
      const double dn = directional_loss(net, x, c);
      net.mutable_bias(l)[i] = orig;
      check_close(grads.b[l][i], (up - dn) / (2 * h));
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    check_close(in_grad[i], (directional_loss(net, xp, c) - directional_loss(net, xm, c)) / (2 * h));
  }
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  Mlp net = Mlp::init({2, 4, 3}, Activation::ReLU, Activation::Tanh, 5);
  GradientTape tape;
  net.forward(Vec{0.3, -0.7}, tape);
  ParamGrads grads = net.zero_grads();
  Vec in_grad = net.backward(tape, Vec{0.0, 0.0, 0.0}, grads);
  CHECK(grads.global_norm() == 0.0);
  for (double v : in_grad) CHECK(v == 0.0);
}

TEST_CASE("backward accumulates into the same gradient buffers") {
  Mlp net = Mlp::init({2, 3, 1}, Activation::Tanh, Activation::Identity, 11);
  GradientTape tape;
  net.forward(Vec{0.4, 0.9}, tape);
  ParamGrads once = net.zero_grads();
  net.backward(tape, Vec{1.0}, once);
  ParamGrads twice = net.zero_grads();
  net.backward(tape, Vec{1.0}, twice);
  net.backward(tape, Vec{1.0}, twice);
  for (std::size_t l = 0; l < net.num_layers(); ++l)
    for (std::size_t i = 0; i < once.w[l].size(); ++i)
      CHECK(twice.w[l].data()[i] == Catch::Approx(2.0 * once.w[l].data()[i]).margin(1e-15));
}

TEST_CASE("adam follows the scalar recurrence exactly") {
  // One weight, constant unit gradient. Reference trajectory computed from
  // the update equations with extended precision.
  Mlp net = Mlp::init({1, 1}, Activation::Tanh, Activation::Identity, 0);
  net.mutable_weight(0)(0, 0) = 0.0;
  net.mutable_bias(0)[0] = 0.0;
  AdamState st = AdamState::for_net(net, 0.1);
  ParamGrads g = net.zero_grads();
  g.w[0](0, 0) = 1.0;

  const double expected[5] = {-0.09999999900000001, -0.19999999800000002, -0.29999999700000003,
                              -0.39999999600000004, -0.49999999500000005};
  for (int step = 0; step < 5; ++step) {
    adam_step(net, g, st);
    CHECK(net.weight(0)(0, 0) == Catch::Approx(expected[step]).epsilon(0).margin(1e-13));
    CHECK(net.bias(0)[0] == 0.0);
  }
  CHECK(st.step == 5);
}

TEST_CASE("AdamVec matches the same scalar recurrence") {
  Vec params{0.0};
  AdamVec opt(1, 0.1);
  const double expected[5] = {-0.09999999900000001, -0.19999999800000002, -0.29999999700000003,
                              -0.39999999600000004, -0.49999999500000005};
  for (int step = 0; step < 5; ++step) {
    opt.update(params, Vec{1.0});
    CHECK(params[0] == Catch::Approx(expected[step]).epsilon(0).margin(1e-13));
  }
}

TEST_CASE("non-finite gradients are rejected with the layer index") {
  Mlp net = Mlp::init({2, 3, 1}, Activation::Tanh, Activation::Identity, 2);
  AdamState st = AdamState::for_net(net, 1e-3);
  ParamGrads g = net.zero_grads();
  g.w[1](0, 0) = std::nan("");
  try {
    adam_step(net, g, st);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  CHECK(st.step == 0);
}

TEST_CASE("global norm clipping") {
  Mlp net = Mlp::init({1, 2}, Activation::Tanh, Activation::Identity, 0);
  ParamGrads g = net.zero_grads();
  g.w[0](0, 0) = 30.0;
  g.w[0](1, 0) = 40.0;  // norm 50
  clip_global_norm(g, 10.0);
  CHECK(g.global_norm() == Catch::Approx(10.0).margin(1e-12));
  CHECK(g.w[0](0, 0) == Catch::Approx(6.0).margin(1e-12));

  ParamGrads small = net.zero_grads();
  small.w[0](0, 0) = 0.5;
  clip_global_norm(small, 10.0);
  CHECK(small.w[0](0, 0) == 0.5);
}

TEST_CASE("glorot init is deterministic, bounded, and seed-sensitive") {
  Mlp a = Mlp::init({4, 8, 3}, Activation::Tanh, Activation::Tanh, 123);
  Mlp b = Mlp::init({4, 8, 3}, Activation::Tanh, Activation::Tanh, 123);
  Mlp c = Mlp::init({4, 8, 3}, Activation::Tanh, Activation::Tanh, 124);
  CHECK(a.params_equal(b));
  CHECK_FALSE(a.params_equal(c));

  CHECK(a.weight(0).rows() == 8);
  CHECK(a.weight(0).cols() == 4);
  CHECK(a.weight(1).rows() == 3);
  CHECK(a.weight(1).cols() == 8);

  const double lim0 = std::sqrt(6.0 / (4 + 8));
  for (std::size_t i = 0; i < a.weight(0).size(); ++i) {
    CHECK(std::fabs(a.weight(0).data()[i]) <= lim0);
  }
  for (double v : a.bias(0)) CHECK(v == 0.0);
  for (double v : a.bias(1)) CHECK(v == 0.0);
}

TEST_CASE("tanh output head stays inside the unit box") {
  Mlp net = Mlp::init({3, 16, 2}, Activation::ReLU, Activation::Tanh, 77);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    Vec x{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
    for (double y : net.forward(x)) {
      CHECK(y <= 1.0);
      CHECK(y >= -1.0);
    }
  }
}

TEST_CASE("checkpoint round-trip is bit exact") {
  Mlp net = Mlp::init({5, 9, 7, 2}, Activation::ReLU, Activation::Tanh, 31415);
  const std::string path = "nn_roundtrip.ckpt";
  net.save(path);
  Mlp back = Mlp::load(path);
  CHECK(back.params_equal(net));
  Rng rng(8);
  Vec x{rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  Vec y0 = net.forward(x);
  Vec y1 = back.forward(x);
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y0[i] == y1[i]);
  std::filesystem::remove(path);
}

TEST_CASE("loading a truncated checkpoint reports the line") {
  Mlp net = Mlp::init({2, 2}, Activation::Tanh, Activation::Identity, 4);
  const std::string path = "nn_truncated.ckpt";
  net.save(path);
  {
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path);
    out << all.substr(0, all.size() / 2);
  }
  CHECK_THROWS_AS(Mlp::load(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("backward on a stale tape is an error") {
  Mlp net = Mlp::init({2, 3, 1}, Activation::Tanh, Activation::Identity, 6);
  GradientTape tape;
  net.forward(Vec{0.1, 0.2}, tape);
  net.mutable_weight(0)(0, 0) += 0.5;
  ParamGrads g = net.zero_grads();
  CHECK_THROWS_AS(net.backward(tape, Vec{1.0}, g), UsageError);
}

TEST_CASE("tape from one net cannot drive another") {
  Mlp a = Mlp::init({2, 2}, Activation::Tanh, Activation::Identity, 1);
  Mlp b = Mlp::init({2, 2}, Activation::Tanh, Activation::Identity, 1);
  GradientTape tape;
  a.forward(Vec{0.1, 0.2}, tape);
  ParamGrads g = b.zero_grads();
  CHECK_THROWS_AS(b.backward(tape, Vec{1.0, 1.0}, g), UsageError);
}

TEST_CASE("polyak update blends parameters elementwise") {
  Mlp live = Mlp::init({2, 3}, Activation::Tanh, Activation::Identity, 10);
  Mlp target = Mlp::init({2, 3}, Activation::Tanh, Activation::Identity, 20);
  Mlp before = target;
  polyak_update(target, live, 0.995);
  for (std::size_t i = 0; i < live.weight(0).size(); ++i) {
    const double want = 0.995 * before.weight(0).data()[i] + 0.005 * live.weight(0).data()[i];
    CHECK(target.weight(0).data()[i] == Catch::Approx(want).epsilon(0).margin(1e-16));
  }
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(Rng::derive(42, 0)), d(Rng::derive(42, 1));
  bool any_diff = false;
  for (int i = 0; i < 10; ++i) any_diff |= (c.next_u64() != d.next_u64());
  CHECK(any_diff);

  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  Rng n(9);
  double mean = 0.0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) mean += n.normal();
  mean /= trials;
  CHECK(std::fabs(mean) < 0.03);
}
