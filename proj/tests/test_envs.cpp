#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "capslab/env.hpp"
#include "capslab/pendulum.hpp"
#include "capslab/quad_rate.hpp"
#include "capslab/schedule.hpp"
#include "capslab/toy_track.hpp"

using namespace capslab;

namespace {

GoalSchedule static_goal(double g) { return GoalSchedule::from_points({{0, g}}); }

}  // namespace

TEST_CASE("schedule construction and lookup") {
  auto s = GoalSchedule::from_points({{0, 1.0}, {10, -2.0}, {20, 0.5}});
  CHECK(s.value_at(0) == 1.0);
  CHECK(s.value_at(9) == 1.0);
  CHECK(s.value_at(10) == -2.0);
  CHECK(s.value_at(19) == -2.0);
  CHECK(s.value_at(20) == 0.5);
  CHECK(s.value_at(100000) == 0.5);

  CHECK_THROWS_AS(GoalSchedule::from_points({}), ConfigError);
  CHECK_THROWS_AS(GoalSchedule::from_points({{5, 1.0}}), ConfigError);
  CHECK_THROWS_AS(GoalSchedule::from_points({{0, 1.0}, {0, 2.0}}), ConfigError);
}

TEST_CASE("random schedules are deterministic and in range") {
  auto a = GoalSchedule::random_steps(99, 500, 50, 100, -1.0, 1.0);
  auto b = GoalSchedule::random_steps(99, 500, 50, 100, -1.0, 1.0);
  auto c = GoalSchedule::random_steps(100, 500, 50, 100, -1.0, 1.0);
  CHECK(a == b);
  CHECK_FALSE(a == c);

  const auto& pts = a.points();
  REQUIRE(pts.size() >= 5);
  CHECK(pts.front().first == 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].second >= -1.0);
    CHECK(pts[i].second <= 1.0);
    if (i > 0) {
      const std::size_t hold = pts[i].first - pts[i - 1].first;
      CHECK(hold >= 50);
      CHECK(hold <= 100);
    }
  }
}

TEST_CASE("schedule file round-trip") {
  auto s = GoalSchedule::random_steps(7, 300, 20, 40, -2.0, 2.0);
  const std::string path = "sched_roundtrip.txt";
  s.save(path);
  CHECK(GoalSchedule::load(path) == s);
  std::filesystem::remove(path);

  const std::string bad = "sched_bad.txt";
  {
    std::ofstream out(bad);
    out << "0 1.0\nnot a pair\n";
  }
  try {
    GoalSchedule::load(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::filesystem::remove(bad);
}

TEST_CASE("toy track closes a unit gap in one ideal step") {
  ToyTrack::Params p;
  p.fixed_schedule = static_goal(1.0);
  ToyTrack env(p);
  Vec obs = env.reset(0);
  CHECK(obs[0] == 1.0);
  StepResult res = env.step(Vec{1.0});
  CHECK(res.obs[0] == 0.0);
  CHECK(res.reward == 0.0);
  CHECK(env.state().c == 1.0);
}

TEST_CASE("toy track idle action keeps the gap") {
  ToyTrack::Params p;
  p.fixed_schedule = static_goal(1.0);
  ToyTrack env(p);
  env.reset(0);
  StepResult res = env.step(Vec{0.0});
  CHECK(res.obs[0] == 1.0);
  CHECK(res.reward == -1.0);
}

TEST_CASE("toy track clamps actions and rejects non-finite ones") {
  ToyTrack::Params p;
  p.fixed_schedule = static_goal(10.0);
  ToyTrack env(p);
  env.reset(0);
  StepResult res = env.step(Vec{100.0});
  CHECK(env.state().c == 2.0);  // a_max
  CHECK(res.obs[0] == 8.0);
  CHECK_THROWS_AS(env.step(Vec{std::nan("")}), EnvFault);
}

TEST_CASE("ideal proportional policy has zero error except at goal changes") {
  ToyTrack env;
  Vec obs = env.reset(314);
  const auto& sched = env.schedule();
  std::size_t changes = 0, zeros = 0;
  for (std::size_t t = 0; t < env.horizon(); ++t) {
    StepResult res = env.step(Vec{obs[0]});
    const bool goal_changed = sched.value_at(t + 1) != sched.value_at(t);
    if (goal_changed) {
      ++changes;
    } else {
      CHECK(res.obs[0] == 0.0);
      ++zeros;
    }
    obs = res.obs;
    if (res.done) break;
  }
  CHECK(changes >= 3);
  CHECK(zeros > changes);
}

TEST_CASE("pendulum equilibria") {
  Pendulum env;
  env.reset_to(0.0, 0.0);
  StepResult res = env.step(Vec{0.0});
  CHECK(res.reward == 0.0);
  CHECK(env.state().theta == 0.0);
  CHECK(env.state().theta_dot == 0.0);

  env.reset_to(std::numbers::pi, 0.0);
  res = env.step(Vec{0.0});
  CHECK(res.reward == Catch::Approx(-std::numbers::pi * std::numbers::pi).margin(1e-12));
  for (int i = 0; i < 10; ++i) res = env.step(Vec{0.0});
  CHECK(std::fabs(std::fabs(env.state().theta) - std::numbers::pi) < 1e-10);
}

TEST_CASE("pendulum matches a scripted integrator from (pi/4, 0)") {
  Pendulum env;
  env.reset_to(std::numbers::pi / 4.0, 0.0);

  double th = std::numbers::pi / 4.0, thd = 0.0;
  for (int k = 0; k < 10; ++k) {
    env.step(Vec{0.0});
    thd = std::clamp(thd + 0.05 * (1.5 * 10.0 * std::sin(th)), -8.0, 8.0);
    th = std::remainder(th + 0.05 * thd, 2.0 * std::numbers::pi);
    CHECK(env.state().theta == Catch::Approx(th).epsilon(0).margin(1e-12));
    CHECK(env.state().theta_dot == Catch::Approx(thd).epsilon(0).margin(1e-12));
  }
}

TEST_CASE("pendulum energy drift under zero torque stays below 5%") {
  Pendulum env;
  env.reset_to(std::numbers::pi / 4.0, 0.0);
  auto energy = [&]() {
    const auto& s = env.state();
    return 0.5 * (1.0 / 3.0) * s.theta_dot * s.theta_dot + 5.0 * std::cos(s.theta);
  };
  const double e0 = energy();
  for (int k = 0; k < 200; ++k) env.step(Vec{0.0});
  CHECK(std::fabs(energy() - e0) / std::fabs(e0) < 0.05);
}

TEST_CASE("pendulum state bounds hold under random torques") {
  Pendulum env;
  env.reset(5);
  Rng rng(6);
  for (int k = 0; k < 400; ++k) {
    StepResult res = env.step(Vec{rng.uniform(-2.0, 2.0)});
    CHECK(std::fabs(env.state().theta) <= std::numbers::pi + 1e-12);
    CHECK(std::fabs(env.state().theta_dot) <= 8.0);
    CHECK(res.obs.size() == 3);
    CHECK(res.obs[0] == std::cos(env.state().theta));
    CHECK(res.obs[1] == std::sin(env.state().theta));
    CHECK(res.obs[2] == env.state().theta_dot / 8.0);
    if (res.done) env.reset(k);
  }
  CHECK_THROWS_AS(env.step(Vec{std::numeric_limits<double>::infinity()}), EnvFault);
}

TEST_CASE("equal motor commands produce zero torque and no rotation") {
  QuadRate env;
  env.reset(1);
  for (int k = 0; k < 50; ++k) {
    env.step(Vec{0.3, 0.3, 0.3, 0.3});
    for (double w : env.state().omega) CHECK(w == 0.0);
  }
  const auto torque = env.mixer_torque({0.7, 0.7, 0.7, 0.7});
  for (double t : torque) CHECK(t == 0.0);
}

TEST_CASE("single motor torques every axis") {
  QuadRate env;
  const auto torque = env.mixer_torque({1.0, 0.0, 0.0, 0.0});
  CHECK(torque[0] == Catch::Approx(-0.1).margin(1e-15));
  CHECK(torque[1] == Catch::Approx(0.1).margin(1e-15));
  CHECK(torque[2] == Catch::Approx(0.02).margin(1e-15));
  for (double t : torque) CHECK(t != 0.0);
}

TEST_CASE("motor lag follows the first-order response") {
  QuadRate env;
  env.reset(2);
  // cmd 0.5 -> normalized target 0.75
  const double u = 0.75, dt = 0.001, tau = 0.02;
  double exact_discrete = 0.0;
  for (int k = 1; k <= 100; ++k) {
    env.step(Vec{0.5, 0.5, 0.5, 0.5});
    exact_discrete = u * (1.0 - std::pow(1.0 - dt / tau, k));
    CHECK(env.state().motors[0] == Catch::Approx(exact_discrete).epsilon(0).margin(1e-12));
    const double continuous = u * (1.0 - std::exp(-k * dt / tau));
    CHECK(std::fabs(env.state().motors[0] - continuous) < 0.02 * u);
  }
  CHECK(exact_discrete > 0.7);  // ~5 time constants in
}

TEST_CASE("sustained differential thrust trips the divergence guard") {
  QuadRate::Params p;
  p.min_hold = p.max_hold = 10000;  // freeze the setpoint
  QuadRate env(p);
  env.reset(3);
  bool done = false;
  double last_reward = 0.0;
  std::size_t steps = 0;
  while (!done && steps < p.horizon) {
    StepResult res = env.step(Vec{1.0, 1.0, -1.0, -1.0});
    done = res.done;
    last_reward = res.reward;
    ++steps;
  }
  CHECK(done);
  CHECK(steps < p.horizon);
  CHECK(last_reward == -10.0);
  CHECK_THROWS_AS(env.step(Vec{std::nan(""), 0, 0, 0}), EnvFault);
}

TEST_CASE("quad observation layout is error, rate, previous command") {
  QuadRate env;
  env.reset(4);
  StepResult res = env.step(Vec{0.2, -0.1, 0.4, 0.0});
  const auto& st = env.state();
  REQUIRE(res.obs.size() == 10);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(res.obs[i] == st.setpoint[i] - st.omega[i]);
    CHECK(res.obs[3 + i] == st.omega[i]);
  }
  CHECK(res.obs[6] == 0.2);
  CHECK(res.obs[7] == -0.1);
  CHECK(res.obs[8] == 0.4);
  CHECK(res.obs[9] == 0.0);
  Vec err = env.tracking_error();
  for (std::size_t i = 0; i < 3; ++i) CHECK(err[i] == st.setpoint[i] - st.omega[i]);
}

TEST_CASE("environments are deterministic and trajectories chain") {
  auto policy = [](const Vec& obs) {
    Vec a(1, 0.3 * obs[0]);
    return a;
  };
  auto quad_policy = [](const Vec& obs) { return Vec{0.1 * obs[0], -0.1 * obs[1], 0.1 * obs[2], 0.05 * obs[0]}; };

  ToyTrack toy1, toy2;
  Trajectory a = rollout(toy1, policy, 11, 100);
  Trajectory b = rollout(toy2, policy, 11, 100);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].s == b.steps[i].s);
    CHECK(a.steps[i].a == b.steps[i].a);
    CHECK(a.steps[i].r == b.steps[i].r);
    if (i + 1 < a.steps.size()) CHECK(a.steps[i].s_next == a.steps[i + 1].s);
  }

  Pendulum p1, p2;
  Trajectory c = rollout(p1, policy, 13, 150);
  Trajectory d = rollout(p2, policy, 13, 150);
  for (std::size_t i = 0; i < c.steps.size(); ++i) {
    CHECK(c.steps[i].s == d.steps[i].s);
    if (i + 1 < c.steps.size()) CHECK(c.steps[i].s_next == c.steps[i + 1].s);
  }

  QuadRate q1, q2;
  Trajectory e = rollout(q1, quad_policy, 17, 500);
  Trajectory f = rollout(q2, quad_policy, 17, 500);
  REQUIRE(e.steps.size() == f.steps.size());
  for (std::size_t i = 0; i < e.steps.size(); ++i) {
    CHECK(e.steps[i].s == f.steps[i].s);
    CHECK(e.steps[i].r == f.steps[i].r);
    if (i + 1 < e.steps.size()) CHECK(e.steps[i].s_next == e.steps[i + 1].s);
  }
}

TEST_CASE("domain shift perturbs dynamics deterministically") {
  QuadRate::Params p;
  p.shift = DomainShift{};
  QuadRate env(p);
  env.reset(21);
  const auto i1 = env.effective_inertia();
  const double t1 = env.effective_motor_tau();
  CHECK((i1[0] != 0.005 || i1[1] != 0.005 || i1[2] != 0.009));
  CHECK(t1 != 0.02);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    CHECK(i1[axis] >= p.inertia[axis] * 0.8 - 1e-15);
    CHECK(i1[axis] <= p.inertia[axis] * 1.2 + 1e-15);
  }
  CHECK(t1 >= 0.01 - 1e-15);
  CHECK(t1 <= 0.03 + 1e-15);

  env.reset(21);
  CHECK(env.effective_inertia() == i1);
  CHECK(env.effective_motor_tau() == t1);

  // observation noise is live and reproducible
  QuadRate e1(p), e2(p);
  Vec o1 = e1.reset(33);
  Vec o2 = e2.reset(33);
  CHECK(o1 == o2);
  StepResult r1 = e1.step(Vec{0, 0, 0, 0});
  StepResult r2 = e2.step(Vec{0, 0, 0, 0});
  CHECK(r1.obs == r2.obs);
  // with zero rates and zero setpoint deltas the raw obs would repeat; noise must not
  QuadRate plain;
  plain.reset(33);
  StepResult rp = plain.step(Vec{0, 0, 0, 0});
  CHECK(r1.obs != rp.obs);

  QuadRate unshifted;
  unshifted.reset(21);
  CHECK(unshifted.effective_inertia() == std::array<double, 3>{0.005, 0.005, 0.009});
  CHECK(unshifted.effective_motor_tau() == 0.02);
}

TEST_CASE("trajectory csv layout") {
  ToyTrack env;
  Trajectory traj = rollout(env, [](const Vec& o) { return Vec{o[0]}; }, 2, 5);
  std::ostringstream out;
  trajectory_to_csv(traj, out);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "step,s0,a0,reward");
  std::size_t rows = 0;
  for (std::string l; std::getline(lines, l);) ++rows;
  CHECK(rows == traj.steps.size());

  Trajectory empty;
  std::ostringstream sink;
  CHECK_THROWS_AS(trajectory_to_csv(empty, sink), UsageError);
}
