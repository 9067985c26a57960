#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "capslab/errors.hpp"
#include "capslab/rng.hpp"

namespace capslab {

/// Piecewise-constant setpoint over a step index: a sorted list of
/// (activation step, value) pairs, the first always at step 0.
class GoalSchedule {
 public:
  using Point = std::pair<std::size_t, double>;

  GoalSchedule() : points_{{0, 0.0}} {}

  static GoalSchedule from_points(std::vector<Point> pts) {
    if (pts.empty()) throw ConfigError("GoalSchedule: need at least one point");
    std::sort(pts.begin(), pts.end(),
              [](const Point& a, const Point& b) { return a.first < b.first; });
    if (pts.front().first != 0) throw ConfigError("GoalSchedule: first point must activate at step 0");
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].first == pts[i - 1].first)
        throw ConfigError("GoalSchedule: duplicate activation step");
    GoalSchedule s;
    s.points_ = std::move(pts);
    return s;
  }

  /// Step changes at seeded random intervals: value U(lo, hi), hold time
  /// uniform in [min_hold, max_hold] steps.
  static GoalSchedule random_steps(std::uint64_t seed, std::size_t horizon, std::size_t min_hold,
                                   std::size_t max_hold, double lo, double hi) {
    if (min_hold == 0 || max_hold < min_hold)
      throw ConfigError("GoalSchedule::random_steps: need 0 < min_hold <= max_hold");
    Rng rng(seed);
    std::vector<Point> pts;
    std::size_t t = 0;
    while (t < horizon) {
      pts.emplace_back(t, rng.uniform(lo, hi));
      t += min_hold + rng.index(max_hold - min_hold + 1);
    }
    return from_points(std::move(pts));
  }

  double value_at(std::size_t step) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), step,
                               [](std::size_t s, const Point& p) { return s < p.first; });
    return std::prev(it)->second;
  }

  const std::vector<Point>& points() const { return points_; }

  bool operator==(const GoalSchedule& other) const { return points_ == other.points_; }

  /// Text format: one "step value" pair per line.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("GoalSchedule::save: cannot open " + path);
    out.precision(17);
    for (const Point& p : points_) out << p.first << ' ' << p.second << '\n';
  }

  static GoalSchedule load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("GoalSchedule::load: cannot open " + path);
    std::vector<Point> pts;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::size_t step;
      double value;
      if (!(ls >> step >> value)) throw ParseError("bad schedule entry", line_no);
      pts.emplace_back(step, value);
    }
    if (pts.empty()) throw ParseError("empty schedule file", line_no);
    return from_points(std::move(pts));
  }

 private:
  std::vector<Point> points_;
};

}  // namespace capslab
