// Copyright 2026 The lddscan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dilation schedules for dilated recurrent networks, derived from a
// classified decay curve.
//
// The curve-fitted construction draws equidistant horizontal lines in
// log-MI between the fitted MI at d = 1 and at d = d_max and uses the lags
// where the fitted (piecewise) power law crosses them as dilations. Where the
// fitted law is steep the crossings bunch together, so fast-decaying regions
// receive dense skip connections.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lddscan/error.hpp"
#include "lddscan/fit.hpp"

namespace lddscan {

enum class ScheduleOrigin { standard, curve_fitted };

inline std::string_view to_string(ScheduleOrigin o) {
  return o == ScheduleOrigin::standard ? "standard" : "curve_fitted";
}

inline ScheduleOrigin parse_schedule_origin(std::string_view name) {
  if (name == "standard") return ScheduleOrigin::standard;
  if (name == "curve_fitted") return ScheduleOrigin::curve_fitted;
  throw Error(errc::data, "unknown schedule origin '" + std::string(name) + "'");
}

struct DilationSchedule {
  std::vector<std::size_t> dilations;
  ScheduleOrigin origin = ScheduleOrigin::standard;
  std::string rationale;

  std::size_t layers() const { return dilations.size(); }
  std::size_t max_dilation() const { return dilations.empty() ? 0 : dilations.back(); }
};

inline bool is_valid_schedule(const std::vector<std::size_t>& d) {
  if (d.empty() || d.front() != 1) return false;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i] <= d[i - 1]) return false;
  return true;
}

struct ScheduleConfig {
  std::size_t n_layers = 1;
  double mi_threshold = kNoiseThreshold;
  std::vector<std::size_t> layer_sweep;
};

struct MaxDilation {
  std::size_t value = 0;
  // No noise crossing was found; the largest sampled lag stands in for it.
  bool lower_bound = false;
  std::string source;  // "period", "noise_crossing" or "max_sampled_lag"
};

/// Periodic curves use their period; everything else uses the lag where MI
/// falls below the threshold for good, else the largest sampled lag.
inline MaxDilation max_dilation(const ClassifiedFit& fit, const ScheduleConfig& config = {}) {
  if (!(config.mi_threshold > 0.0)) throw Error(errc::usage, "mi_threshold must be positive");
  if (fit.decay_class == DecayClass::power_law_periodic) {
    if (!fit.periodicity) throw Error(errc::data, "periodic fit carries no periodicity signature");
    return {fit.periodicity->period, false, "period"};
  }
  std::optional<std::size_t> crossing = fit.noise_crossing_d;
  std::size_t max_lag = fit.max_sampled_lag;
  if (!fit.samples.empty()) {
    std::vector<CurvePoint> pts;
    pts.reserve(fit.samples.size());
    for (const auto& s : fit.samples) pts.push_back({s.lag, s.mi, 0});
    crossing = noise_crossing(pts, config.mi_threshold);
    max_lag = std::max(max_lag, fit.samples.back().lag);
  }
  if (crossing) return {*crossing, false, "noise_crossing"};
  if (max_lag == 0) throw Error(errc::data, "fit has neither a noise crossing nor a sampled lag range");
  return {max_lag, true, "max_sampled_lag"};
}

inline constexpr std::size_t kMaxStandardLayers = 63;

/// 1, 2, 4, ..., 2^(n_layers-1).
inline DilationSchedule standard_dilations(std::size_t n_layers) {
  if (n_layers < 1 || n_layers > kMaxStandardLayers)
    throw Error(errc::usage, "standard schedule needs 1.." + std::to_string(kMaxStandardLayers) + " layers");
  DilationSchedule s;
  for (std::size_t i = 0; i < n_layers; ++i) s.dilations.push_back(std::size_t{1} << i);
  s.origin = ScheduleOrigin::standard;
  s.rationale = "standard doubling progression, " + std::to_string(n_layers) + " layers";
  return s;
}

/// Doubling progression truncated at d_max: powers of two below d_max, then
/// d_max itself. May return fewer than n_layers dilations.
inline DilationSchedule capped_standard_dilations(std::size_t n_layers, std::size_t d_max) {
  if (n_layers < 1) throw Error(errc::usage, "schedule needs at least one layer");
  if (d_max < 1) throw Error(errc::usage, "max dilation must be positive");
  DilationSchedule s;
  for (std::size_t d = 1; s.dilations.size() < n_layers; d *= 2) {
    if (d < d_max) {
      s.dilations.push_back(d);
    } else {
      s.dilations.push_back(d_max);
      break;
    }
  }
  s.origin = ScheduleOrigin::standard;
  s.rationale = "standard doubling progression capped at max dilation " + std::to_string(d_max);
  return s;
}

namespace detail {

// ln(MI) as a continuous function of ln(d). With a break, the right segment
// keeps its fitted slope but is anchored to the left segment at the break,
// so every MI level between the endpoints is attained exactly once.
struct LogLogModel {
  double intercept = 0.0;
  double left_slope = 0.0;
  double break_log_d = 0.0;
  double right_slope = 0.0;
  bool broken = false;

  double y(double log_d) const {
    if (!broken || log_d <= break_log_d) return intercept + left_slope * log_d;
    return intercept + left_slope * break_log_d + right_slope * (log_d - break_log_d);
  }

  double log_d_at(double level) const {
    if (!broken || level >= y(break_log_d)) return (level - intercept) / left_slope;
    return break_log_d + (level - y(break_log_d)) / right_slope;
  }
};

inline LogLogModel model_of(const ClassifiedFit& fit) {
  LogLogModel m;
  if (fit.decay_class == DecayClass::broken_power_law) {
    if (!fit.broken) throw Error(errc::data, "broken power-law fit is missing its segments");
    m.intercept = fit.broken->left.log_intercept;
    m.left_slope = fit.broken->left.slope;
    m.right_slope = fit.broken->right.slope;
    m.break_log_d = std::log(double(fit.broken->break_d));
    m.broken = true;
    if (!(m.left_slope < 0.0 && m.right_slope < 0.0))
      throw Error(errc::non_decaying, "broken power-law segments must both decay");
  } else if (fit.power &&
             (fit.decay_class == DecayClass::power_law || fit.decay_class == DecayClass::power_law_periodic)) {
    m.intercept = fit.power->log_intercept;
    m.left_slope = fit.power->slope;
    if (!(m.left_slope < 0.0))
      throw Error(errc::non_decaying, "power-law slope " + std::to_string(m.left_slope) + " does not decay");
  } else {
    throw Error(errc::usage, std::string("curve-fitted dilations need a power-law model, fit is ") +
                                 std::string(to_string(fit.decay_class)));
  }
  return m;
}

// Rounds candidate dilations into a strictly increasing list with first 1 and
// last d_max. A value that collides with its predecessor moves up to the next
// free integer, but never so far that later layers run out of room below d_max.
inline std::vector<std::size_t> settle_dilations(const std::vector<double>& raw, std::size_t d_max) {
  const std::size_t n = raw.size();
  std::vector<std::size_t> out(n);
  out[0] = 1;
  for (std::size_t k = 1; k < n; ++k) {
    const double clamped = std::clamp(raw[k], 1.0, double(d_max));
    std::size_t v = k + 1 == n ? d_max : static_cast<std::size_t>(std::llround(clamped));
    v = std::max(v, out[k - 1] + 1);
    v = std::min(v, d_max - (n - 1 - k));
    out[k] = v;
  }
  return out;
}

}  // namespace detail

/// Curve-fitted schedule of exactly n_layers dilations from 1 to d_max.
inline DilationSchedule intercept_dilations(const ClassifiedFit& fit, std::size_t n_layers, std::size_t d_max) {
  if (n_layers < 2) throw Error(errc::usage, "curve-fitted schedules need at least two layers");
  if (n_layers > d_max)
    throw Error(errc::usage, std::to_string(n_layers) + " layers cannot have distinct dilations up to " +
                                 std::to_string(d_max));
  const detail::LogLogModel model = detail::model_of(fit);
  const double top = model.y(0.0);
  const double bottom = model.y(std::log(double(d_max)));
  std::vector<double> raw(n_layers);
  for (std::size_t k = 0; k < n_layers; ++k) {
    const double level = top + (bottom - top) * double(k) / double(n_layers - 1);
    raw[k] = std::exp(model.log_d_at(level));
  }
  DilationSchedule s;
  s.dilations = detail::settle_dilations(raw, d_max);
  s.origin = ScheduleOrigin::curve_fitted;
  s.rationale = std::to_string(n_layers) + " equidistant log-MI levels intersected with the fitted " +
                (model.broken ? "broken power law (break at d=" + std::to_string(fit.broken->break_d) + ")"
                              : std::string("power law")) +
                ", max dilation " + std::to_string(d_max);
  return s;
}

/// Consecutive dilations up to the break (at most n_layers - 1 of them), then
/// the doubling progression capped at d_max.
inline DilationSchedule dense_then_standard(std::size_t n_layers, std::size_t break_d, std::size_t d_max) {
  if (n_layers < 2 || n_layers > d_max) throw Error(errc::usage, "hybrid schedule needs 2..d_max layers");
  DilationSchedule s;
  const std::size_t dense = std::min({break_d, n_layers - 1, d_max});
  for (std::size_t d = 1; d <= dense; ++d) s.dilations.push_back(d);
  std::size_t p = 1;
  while (p <= dense) p *= 2;
  for (; s.dilations.size() < n_layers; p *= 2) {
    if (p < d_max) {
      s.dilations.push_back(p);
    } else {
      if (d_max > s.dilations.back()) s.dilations.push_back(d_max);
      break;
    }
  }
  s.origin = ScheduleOrigin::curve_fitted;
  s.rationale = "dense dilations up to the break at d=" + std::to_string(break_d) +
                ", doubling progression beyond";
  return s;
}

/// Doubling progression up to the break, then geometric spacing from the last
/// power of two to d_max (the intercepts of a single power-law segment).
inline DilationSchedule standard_then_sparse(std::size_t n_layers, std::size_t break_d, std::size_t d_max) {
  if (n_layers < 2 || n_layers > d_max) throw Error(errc::usage, "hybrid schedule needs 2..d_max layers");
  std::vector<std::size_t> head;
  for (std::size_t d = 1; d <= break_d && d < d_max && head.size() + 1 < n_layers; d *= 2) head.push_back(d);
  const std::size_t remaining = n_layers - head.size();
  const double from = double(head.back());
  std::vector<double> raw(n_layers);
  for (std::size_t k = 0; k < head.size(); ++k) raw[k] = double(head[k]);
  for (std::size_t j = 1; j <= remaining; ++j)
    raw[head.size() + j - 1] = from * std::pow(double(d_max) / from, double(j) / double(remaining));
  DilationSchedule s;
  s.dilations = detail::settle_dilations(raw, d_max);
  s.origin = ScheduleOrigin::curve_fitted;
  s.rationale = "doubling progression up to the break at d=" + std::to_string(break_d) +
                ", geometric sparse dilations beyond up to " + std::to_string(d_max);
  return s;
}

/// The single schedule recommended for n_layers: curve-fitted for power-law
/// classes, capped doubling for exponential decay.
inline DilationSchedule fitted_schedule(const ClassifiedFit& fit, const ScheduleConfig& config) {
  const MaxDilation md = max_dilation(fit, config);
  const std::size_t n = config.n_layers;
  if (n < 1) throw Error(errc::usage, "n_layers must be at least 1");
  if (n > md.value)
    throw Error(errc::usage, std::to_string(n) + " layers exceed max dilation " + std::to_string(md.value));
  if (fit.decay_class == DecayClass::exponential) return capped_standard_dilations(n, md.value);
  if (n == 1) return DilationSchedule{{1}, ScheduleOrigin::curve_fitted, "single layer"};
  return intercept_dilations(fit, n, md.value);
}

struct GridSearchSpec {
  std::vector<DilationSchedule> schedules;
  ClassifiedFit evidence;
  std::string dataset_meta;
  MaxDilation max_dilation;
  std::vector<std::string> warnings;
};

/// Candidate schedules for a grid search over the layer counts in
/// config.layer_sweep:
///   - the doubling progression at every layer count (capped at the max
///     dilation for exponential decay, which gets nothing else);
///   - the curve-fitted schedule at every layer count with d_max = max dilation;
///   - for broken power laws, the two hybrids: dense up to the break then
///     doubling, and doubling up to the break then sparse.
/// Identical dilation lists are emitted once, first occurrence wins.
inline GridSearchSpec build_grid(const ClassifiedFit& fit, const ScheduleConfig& config,
                                 std::string dataset_meta = {}) {
  if (config.layer_sweep.empty()) throw Error(errc::usage, "layer sweep is empty");
  GridSearchSpec grid;
  grid.evidence = fit;
  grid.dataset_meta = std::move(dataset_meta);
  grid.max_dilation = max_dilation(fit, config);
  const std::size_t md = grid.max_dilation.value;

  auto add = [&grid](DilationSchedule s) {
    for (const auto& existing : grid.schedules)
      if (existing.dilations == s.dilations) return;
    grid.schedules.push_back(std::move(s));
  };

  if (grid.max_dilation.lower_bound)
    grid.warnings.push_back("no noise crossing found; max dilation " + std::to_string(md) +
                            " is the largest sampled lag and only a lower bound");
  if (fit.low_confidence && fit.decay_class != DecayClass::power_law_periodic)
    grid.warnings.push_back("estimator bias floor exceeds the MI threshold near the noise crossing");

  if (fit.decay_class == DecayClass::exponential) {
    for (std::size_t n : config.layer_sweep) add(capped_standard_dilations(n, md));
    return grid;
  }

  bool below = false, at_or_above = false;
  for (std::size_t n : config.layer_sweep) {
    DilationSchedule s = standard_dilations(n);
    (s.max_dilation() < md ? below : at_or_above) = true;
    add(std::move(s));
  }
  if (!(below && at_or_above))
    grid.warnings.push_back("standard schedules in the sweep do not bracket max dilation " + std::to_string(md));

  for (std::size_t n : config.layer_sweep) {
    if (n < 2 || n > md) continue;
    try {
      add(intercept_dilations(fit, n, md));
    } catch (const Error& e) {
      if (e.code() != errc::non_decaying) throw;
      grid.warnings.push_back(std::string("curve-fitted schedules skipped: ") + e.what());
      break;
    }
  }

  if (fit.decay_class == DecayClass::broken_power_law && fit.broken && md > fit.broken->break_d) {
    const std::size_t b = fit.broken->break_d;
    for (std::size_t n : config.layer_sweep)
      if (n >= 2 && n <= md) add(dense_then_standard(n, b, md));
    for (std::size_t n : config.layer_sweep)
      if (n >= 2 && n <= md) add(standard_then_sparse(n, b, md));
  }
  return grid;
}

}  // namespace lddscan
