#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "capslab/errors.hpp"
#include "capslab/schedule.hpp"
#include "capslab/toy_track.hpp"
#include "capslab/trainer.hpp"

namespace capslab {

namespace detail {

/// Action filters treat each action component as an independent channel. The
/// channel count is fixed by the first sample; changing it mid-stream is a
/// usage error, and the lock survives reset() so a filter instance stays tied
/// to one action space.
inline void bind_filter_channels(std::size_t& bound, std::size_t n) {
  if (n == 0) throw UsageError("action filter: empty action vector");
  if (bound == 0) {
    bound = n;
  } else if (bound != n) {
    throw UsageError("action filter: channel count changed mid-stream");
  }
}

}  // namespace detail

/// First-order exponential smoothing y = alpha*x + (1-alpha)*y_prev, seeded
/// with the first sample. alpha = 1 is a stateless pass-through.
class EmaFilter {
 public:
  explicit EmaFilter(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("EmaFilter: alpha must be in (0, 1]");
  }

  double alpha() const { return alpha_; }

  Vec apply(const Vec& x) {
    detail::bind_filter_channels(channels_, x.size());
    if (alpha_ == 1.0) return x;
    if (!primed_) {
      state_ = x;
      primed_ = true;
      return x;
    }
    for (std::size_t c = 0; c < x.size(); ++c)
      state_[c] = alpha_ * x[c] + (1.0 - alpha_) * state_[c];
    return state_;
  }

  void reset() {
    primed_ = false;
    state_.clear();
  }

 private:
  double alpha_;
  Vec state_;
  bool primed_ = false;
  std::size_t channels_ = 0;
};

/// Sliding-window median with an odd window, exact order statistic. The
/// window is pre-filled with the first sample so early outputs track the
/// input instead of an arbitrary zero history.
class MedianFilter {
 public:
  explicit MedianFilter(std::size_t window) : window_(window) {
    if (window == 0 || window % 2 == 0)
      throw ConfigError("MedianFilter: window must be a positive odd number");
  }

  std::size_t window() const { return window_; }

  Vec apply(const Vec& x) {
    detail::bind_filter_channels(channels_, x.size());
    if (history_.empty()) history_.assign(channels_, Vec(window_, 0.0));
    if (!primed_) {
      for (std::size_t c = 0; c < x.size(); ++c) history_[c].assign(window_, x[c]);
      pos_ = 0;
      primed_ = true;
    } else {
      for (std::size_t c = 0; c < x.size(); ++c) history_[c][pos_] = x[c];
      pos_ = (pos_ + 1) % window_;
    }
    Vec out(x.size());
    Vec scratch(window_);
    for (std::size_t c = 0; c < x.size(); ++c) {
      scratch = history_[c];
      auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(window_ / 2);
      std::nth_element(scratch.begin(), mid, scratch.end());
      out[c] = *mid;
    }
    return out;
  }

  void reset() {
    primed_ = false;
    pos_ = 0;
  }

 private:
  std::size_t window_;
  std::vector<Vec> history_;
  std::size_t pos_ = 0;
  bool primed_ = false;
  std::size_t channels_ = 0;
};

/// Finite impulse response y_t = sum_k taps[k] * x_{t-k} with zero-initialized
/// delay lines, so a unit step through taps {0.25 x4} ramps 0.25, 0.5, 0.75, 1.
class FirFilter {
 public:
  explicit FirFilter(Vec taps) : taps_(std::move(taps)) {
    if (taps_.empty()) throw ConfigError("FirFilter: need at least one tap");
    for (double t : taps_)
      if (!std::isfinite(t)) throw ConfigError("FirFilter: non-finite tap");
  }

  const Vec& taps() const { return taps_; }

  /// Sum of taps. Unity means constants pass through unchanged; a non-unity
  /// gain is legal but worth a warning at configuration time.
  double gain() const { return std::accumulate(taps_.begin(), taps_.end(), 0.0); }

  Vec apply(const Vec& x) {
    detail::bind_filter_channels(channels_, x.size());
    if (delay_.empty()) delay_.assign(channels_, Vec(taps_.size(), 0.0));
    Vec out(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
      Vec& d = delay_[c];
      for (std::size_t k = d.size(); k-- > 1;) d[k] = d[k - 1];
      d[0] = x[c];
      double acc = 0.0;
      for (std::size_t k = 0; k < taps_.size(); ++k) acc += taps_[k] * d[k];
      out[c] = acc;
    }
    return out;
  }

  void reset() {
    for (Vec& d : delay_) std::fill(d.begin(), d.end(), 0.0);
  }

 private:
  Vec taps_;
  std::vector<Vec> delay_;
  std::size_t channels_ = 0;
};

using ActionFilter = std::variant<EmaFilter, MedianFilter, FirFilter>;

constexpr double kUnityGainTolerance = 1e-12;

inline Vec filter_apply(ActionFilter& f, const Vec& x) {
  return std::visit([&x](auto& g) { return g.apply(x); }, f);
}

inline void filter_reset(ActionFilter& f) {
  std::visit([](auto& g) { g.reset(); }, f);
}

inline std::string filter_name(const ActionFilter& f) {
  if (std::holds_alternative<EmaFilter>(f)) return "ema";
  if (std::holds_alternative<MedianFilter>(f)) return "median";
  return "fir";
}

inline nlohmann::json filter_to_json(const ActionFilter& f) {
  nlohmann::json j;
  j["type"] = filter_name(f);
  if (const auto* e = std::get_if<EmaFilter>(&f)) {
    j["alpha"] = e->alpha();
  } else if (const auto* m = std::get_if<MedianFilter>(&f)) {
    j["window"] = m->window();
  } else {
    j["taps"] = std::get<FirFilter>(f).taps();
  }
  return j;
}

inline ActionFilter filter_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
    throw ConfigError("filter config: need an object with a string 'type'");
  const std::string type = j.at("type").get<std::string>();
  if (type == "ema") {
    if (!j.contains("alpha") || !j.at("alpha").is_number())
      throw ConfigError("filter config: ema needs a numeric 'alpha'");
    return EmaFilter(j.at("alpha").get<double>());
  }
  if (type == "median") {
    // accept both signed and unsigned integer storage for the window
    if (!j.contains("window") || !j.at("window").is_number_integer() ||
        j.at("window").get<long long>() <= 0)
      throw ConfigError("filter config: median needs a positive integer 'window'");
    return MedianFilter(j.at("window").get<std::size_t>());
  }
  if (type == "fir") {
    if (!j.contains("taps") || !j.at("taps").is_array() || j.at("taps").empty())
      throw ConfigError("filter config: fir needs a non-empty 'taps' array");
    Vec taps;
    taps.reserve(j.at("taps").size());
    for (const auto& t : j.at("taps")) {
      if (!t.is_number()) throw ConfigError("filter config: fir taps must be numbers");
      taps.push_back(t.get<double>());
    }
    return FirFilter(std::move(taps));
  }
  throw ConfigError("filter config: unknown type '" + type + "'");
}

/// Inserts the filter between the policy and the environment: the policy still
/// observes the true state, only its emitted action is smoothed. The filter is
/// held by reference and reset at every episode boundary.
inline EpisodePolicy wrap_policy(EpisodePolicy inner, ActionFilter& filter) {
  EpisodePolicy out;
  out.act = [inner_act = std::move(inner.act), &filter](const Vec& obs) {
    return filter_apply(filter, inner_act(obs));
  };
  out.on_reset = [inner_reset = std::move(inner.on_reset), &filter]() {
    if (inner_reset) inner_reset();
    filter_reset(filter);
  };
  return out;
}

/// The reference controller for filter tuning: proportional feedback on the
/// tracking error. On the integrator plant a gain of one is already deadbeat,
/// so any overshoot in the tuned loop is introduced by the filter alone.
inline EpisodePolicy p_controller_policy(double gain = 1.0) {
  EpisodePolicy p;
  p.act = [gain](const Vec& obs) {
    Vec u(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) u[i] = gain * obs[i];
    return u;
  };
  return p;
}

struct StepResponse {
  double overshoot = 0.0;          // peak excursion above the setpoint
  std::size_t settling_steps = 0;  // steps until |error| <= band holds through the horizon
  bool settled = false;
};

/// A loop counts as settled only after holding the band this many steps; a
/// limit cycle that happens to end the window on an in-band sample must not
/// pass as settled.
constexpr std::size_t kSettleDwell = 10;

/// Closed-loop unit-step response of the filtered proportional controller on
/// the integrator plant. settling_steps counts from the first action; a loop
/// that does not hold the band for the final kSettleDwell steps reports
/// settled = false and settling_steps = horizon.
inline StepResponse p_controller_step_response(ActionFilter filter, double gain = 1.0,
                                               std::size_t horizon = 100, double band = 0.02) {
  if (horizon == 0) throw UsageError("p_controller_step_response: need a positive horizon");
  ToyTrack::Params params;
  params.horizon = horizon;
  params.fixed_schedule = GoalSchedule::from_points({{0, 1.0}});
  ToyTrack env(params);
  filter_reset(filter);

  Vec obs = env.reset(0);
  StepResponse out;
  bool any_violation = false;
  std::size_t last_violation = 0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Vec u = {gain * obs[0]};
    const Vec y = filter_apply(filter, u);
    StepResult res = env.step(y);
    const double err = res.obs[0];  // goal minus position
    if (-err > out.overshoot) out.overshoot = -err;
    if (std::abs(err) > band) {
      any_violation = true;
      last_violation = t;
    }
    obs = std::move(res.obs);
  }
  out.settled = !any_violation || horizon - (last_violation + 1) >= kSettleDwell;
  out.settling_steps = !any_violation ? 0 : (out.settled ? last_violation + 1 : horizon);
  return out;
}

/// Overshoot at or below this is treated as zero; it absorbs the rounding
/// dust of grid parameters like 19 * 0.05 without admitting real overshoot.
constexpr double kOvershootTolerance = 1e-9;

struct TunedFilter {
  ActionFilter filter = EmaFilter(1.0);
  StepResponse response;
  // True when the response meets the overshoot bound (critically damped up to
  // tolerance). False marks a best-effort pick: no candidate in the family
  // met the bound and this one had the least overshoot.
  bool critically_damped = false;
};

struct FilterTuning {
  TunedFilter ema;
  TunedFilter median;
  TunedFilter fir;
};

namespace detail {

/// Candidates are ordered gentlest-first; ties on the selection key keep the
/// earliest, so the sweep prefers the least aggressive compliant filter.
inline TunedFilter pick_tuned(const std::vector<ActionFilter>& candidates, double gain,
                              std::size_t horizon, double band, double overshoot_bound) {
  if (candidates.empty()) throw UsageError("filter tuning: empty candidate list");
  std::optional<TunedFilter> best_ok;
  std::optional<TunedFilter> least_overshoot;
  for (const ActionFilter& cand : candidates) {
    const StepResponse r = p_controller_step_response(cand, gain, horizon, band);
    if (r.overshoot <= overshoot_bound &&
        (!best_ok || r.settling_steps < best_ok->response.settling_steps))
      best_ok = TunedFilter{cand, r, true};
    if (!least_overshoot || r.overshoot < least_overshoot->response.overshoot)
      least_overshoot = TunedFilter{cand, r, false};
  }
  return best_ok ? *best_ok : *least_overshoot;
}

}  // namespace detail

/// Grid-searches each filter family for a critically damped closed loop
/// around the reference proportional controller: zero overshoot (up to
/// `overshoot_bound`), then minimal settling time, then the gentlest
/// parameters. A family where no candidate meets the bound returns its
/// least-overshoot member flagged critically_damped = false.
///
/// Grids: ema alpha 0.95 down to 0.05 in 0.05 steps; median windows 3..11;
/// fir two-tap kernels {1-b, b} for b = 0.05..0.5 plus moving averages of
/// length 3..12. The identity filter is deliberately excluded so the sweep
/// reports what smoothing costs rather than falling back to a no-op.
inline FilterTuning tune_filters_on_p_controller(double gain = 1.0, std::size_t horizon = 100,
                                                 double band = 0.02,
                                                 double overshoot_bound = kOvershootTolerance) {
  std::vector<ActionFilter> emas;
  // i/20.0 rather than i*0.05: same grid, but the points land on the doubles
  // nearest the decimals, so serialized configs stay readable
  for (int i = 19; i >= 1; --i) emas.push_back(EmaFilter(static_cast<double>(i) / 20.0));

  std::vector<ActionFilter> medians;
  for (std::size_t w = 3; w <= 11; w += 2) medians.push_back(MedianFilter(w));

  std::vector<ActionFilter> firs;
  for (int i = 1; i <= 10; ++i) {
    const double b = static_cast<double>(i) / 20.0;
    firs.push_back(FirFilter({1.0 - b, b}));
  }
  for (std::size_t len = 3; len <= 12; ++len)
    firs.push_back(FirFilter(Vec(len, 1.0 / static_cast<double>(len))));

  FilterTuning out;
  out.ema = detail::pick_tuned(emas, gain, horizon, band, overshoot_bound);
  out.median = detail::pick_tuned(medians, gain, horizon, band, overshoot_bound);
  out.fir = detail::pick_tuned(firs, gain, horizon, band, overshoot_bound);
  return out;
}

inline nlohmann::json tuned_filter_to_json(const TunedFilter& t) {
  return {{"filter", filter_to_json(t.filter)},
          {"overshoot", t.response.overshoot},
          {"settling_steps", t.response.settling_steps},
          {"settled", t.response.settled},
          {"critically_damped", t.critically_damped}};
}

inline TunedFilter tuned_filter_from_json(const nlohmann::json& j) {
  for (const char* key : {"filter", "overshoot", "settling_steps", "settled", "critically_damped"})
    if (!j.contains(key)) throw ConfigError(std::string("tuned filter: missing '") + key + "'");
  TunedFilter t;
  t.filter = filter_from_json(j.at("filter"));
  t.response.overshoot = j.at("overshoot").get<double>();
  t.response.settling_steps = j.at("settling_steps").get<std::size_t>();
  t.response.settled = j.at("settled").get<bool>();
  t.critically_damped = j.at("critically_damped").get<bool>();
  return t;
}

inline nlohmann::json tuning_to_json(const FilterTuning& tu) {
  return {{"ema", tuned_filter_to_json(tu.ema)},
          {"median", tuned_filter_to_json(tu.median)},
          {"fir", tuned_filter_to_json(tu.fir)}};
}

inline FilterTuning tuning_from_json(const nlohmann::json& j) {
  for (const char* key : {"ema", "median", "fir"})
    if (!j.contains(key)) throw ConfigError(std::string("filter tuning: missing '") + key + "'");
  FilterTuning tu;
  tu.ema = tuned_filter_from_json(j.at("ema"));
  tu.median = tuned_filter_from_json(j.at("median"));
  tu.fir = tuned_filter_from_json(j.at("fir"));
  return tu;
}

}  // namespace capslab
