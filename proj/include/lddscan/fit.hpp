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

// Decay-law fits on dependency decay curves and the four-way classification
// into power-law, broken power-law, periodic power-law and exponential decay.
//
// All fits are ordinary least squares on ln(MI): against ln(d) for power
// laws, against d for exponentials. Points with MI == 0 cannot enter a log
// fit; they are skipped and counted in `excluded_zero`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lddscan/error.hpp"
#include "lddscan/estimator.hpp"

namespace lddscan {

/// Inclusive lag window.
struct LagRange {
  std::size_t lo = 1;
  std::size_t hi = std::numeric_limits<std::size_t>::max();

  bool contains(std::size_t d) const { return d >= lo && d <= hi; }
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double sse = 0.0;
  double sst = 0.0;
  double r2 = 0.0;
};

namespace detail {

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.sse += r * r;
  }
  f.sst = syy;
  if (syy > 0.0) f.r2 = std::clamp(1.0 - f.sse / syy, 0.0, 1.0);
  else f.r2 = 1.0;  // constant data is fitted exactly by a flat line
  return f;
}

struct LogSamples {
  std::vector<double> lag;
  std::vector<double> log_mi;
  std::vector<std::size_t> lags;
  std::size_t excluded_zero = 0;
};

inline LogSamples usable_samples(std::span<const CurvePoint> points, LagRange range) {
  LogSamples s;
  for (const auto& p : points) {
    if (!range.contains(p.lag)) continue;
    if (!(p.mi > 0.0)) {
      ++s.excluded_zero;
      continue;
    }
    s.lags.push_back(p.lag);
    s.lag.push_back(double(p.lag));
    s.log_mi.push_back(std::log(p.mi));
  }
  return s;
}

inline void require_points(const LogSamples& s, std::size_t needed, const char* what) {
  if (s.lags.size() >= needed) return;
  std::string msg = std::string(what) + " needs at least " + std::to_string(needed) +
                    " points with MI > 0 in range, found " + std::to_string(s.lags.size());
  if (s.lags.empty() && s.excluded_zero > 0) msg += " (all MI values in range are zero)";
  throw Error(errc::too_few_points, msg);
}

}  // namespace detail

struct PowerLawFit {
  double slope = 0.0;          // d ln(MI) / d ln(d)
  double log_intercept = 0.0;  // ln(MI) at d = 1
  double r2 = 0.0;
  std::size_t d_lo = 0;
  std::size_t d_hi = 0;
  std::size_t n_points = 0;
  std::size_t excluded_zero = 0;
  double sse = 0.0;

  double log_mi_at(double d) const { return log_intercept + slope * std::log(d); }
};

struct ExponentialFit {
  double rate = 0.0;           // MI ~ exp(-rate * d)
  double log_intercept = 0.0;  // ln(MI) at d = 0
  double r2 = 0.0;
  std::size_t d_lo = 0;
  std::size_t d_hi = 0;
  std::size_t n_points = 0;
  std::size_t excluded_zero = 0;
  double sse = 0.0;
};

struct BrokenPowerLawFit {
  std::size_t break_d = 0;
  PowerLawFit left;   // d <= break_d
  PowerLawFit right;  // d >= break_d
  double improvement = 0.0;  // 1 - SSE_broken / SSE_single, floored at 0
  double sse = 0.0;
  double single_sse = 0.0;
};

struct PeriodicitySignature {
  std::size_t period = 0;
  std::vector<std::size_t> peak_lags;
  double prominence = 0.0;
};

namespace detail {

inline PowerLawFit power_law_from(std::span<const double> lag, std::span<const double> log_mi,
                                  std::size_t d_lo, std::size_t d_hi) {
  std::vector<double> x(lag.size());
  for (std::size_t i = 0; i < lag.size(); ++i) x[i] = std::log(lag[i]);
  const LineFit line = least_squares(x, log_mi);
  PowerLawFit f;
  f.slope = line.slope;
  f.log_intercept = line.intercept;
  f.r2 = line.r2;
  f.sse = line.sse;
  f.d_lo = d_lo;
  f.d_hi = d_hi;
  f.n_points = lag.size();
  return f;
}

}  // namespace detail

inline PowerLawFit fit_power_law(std::span<const CurvePoint> points, LagRange range = {}) {
  const auto s = detail::usable_samples(points, range);
  detail::require_points(s, 3, "power-law fit");
  PowerLawFit f = detail::power_law_from(s.lag, s.log_mi, s.lags.front(), s.lags.back());
  f.excluded_zero = s.excluded_zero;
  return f;
}

inline PowerLawFit fit_power_law(const DecayCurve& curve, LagRange range = {}) {
  return fit_power_law(std::span<const CurvePoint>(curve.points), range);
}

/// Semi-log fit of ln(MI) against d. Throws errc::non_decaying when the
/// fitted rate is not positive.
inline ExponentialFit fit_exponential(std::span<const CurvePoint> points, LagRange range = {}) {
  const auto s = detail::usable_samples(points, range);
  detail::require_points(s, 3, "exponential fit");
  const LineFit line = detail::least_squares(s.lag, s.log_mi);
  if (!(-line.slope > 0.0))
    throw Error(errc::non_decaying, "exponential fit has non-positive decay rate " +
                                        std::to_string(-line.slope));
  ExponentialFit f;
  f.rate = -line.slope;
  f.log_intercept = line.intercept;
  f.r2 = line.r2;
  f.sse = line.sse;
  f.d_lo = s.lags.front();
  f.d_hi = s.lags.back();
  f.n_points = s.lags.size();
  f.excluded_zero = s.excluded_zero;
  return f;
}

inline ExponentialFit fit_exponential(const DecayCurve& curve, LagRange range = {}) {
  return fit_exponential(std::span<const CurvePoint>(curve.points), range);
}

inline constexpr double kBreakTieTolerance = 1e-12;
// Per-point log-space SSE below which a single power law counts as exact;
// the ratio of two round-off residuals carries no information.
inline constexpr double kExactSsePerPoint = 1e-24;

/// Exhaustive single-break search. Every usable lag with at least three
/// usable points on each side (the break point belongs to both segments) is
/// tried; the smallest total SSE wins, ties going to the smaller lag.
inline BrokenPowerLawFit fit_broken_power_law(std::span<const CurvePoint> points, LagRange range = {}) {
  const auto s = detail::usable_samples(points, range);
  detail::require_points(s, 7, "broken power-law fit");
  const std::size_t n = s.lags.size();
  const std::span<const double> lag(s.lag), y(s.log_mi);

  const PowerLawFit single = detail::power_law_from(lag, y, s.lags.front(), s.lags.back());

  std::optional<BrokenPowerLawFit> best;
  for (std::size_t i = 2; i + 3 <= n; ++i) {
    PowerLawFit left = detail::power_law_from(lag.first(i + 1), y.first(i + 1), s.lags.front(), s.lags[i]);
    PowerLawFit right = detail::power_law_from(lag.subspan(i), y.subspan(i), s.lags[i], s.lags.back());
    const double total = left.sse + right.sse;
    if (!best || total < best->sse - kBreakTieTolerance) {
      best = BrokenPowerLawFit{};
      best->break_d = s.lags[i];
      best->left = left;
      best->right = right;
      best->sse = total;
    }
  }
  if (!best) throw Error(errc::too_few_points, "no break candidate admits two-sided fits");
  best->single_sse = single.sse;
  best->improvement = single.sse > kExactSsePerPoint * double(n) ? std::max(0.0, 1.0 - best->sse / single.sse) : 0.0;
  return *best;
}

inline BrokenPowerLawFit fit_broken_power_law(const DecayCurve& curve, LagRange range = {}) {
  return fit_broken_power_law(std::span<const CurvePoint>(curve.points), range);
}

struct PeriodicityConfig {
  // A peak must stand this far above the power-law baseline and above its
  // base (relative), and its excess over the baseline must be at least this
  // fraction of the tallest peak's excess.
  double prominence = 0.2;
  std::size_t spacing_tolerance = 1;
  std::size_t min_dense_prefix = 8;
};

/// Number of leading points whose lags are exactly 1, 2, 3, ...
inline std::size_t dense_prefix_length(std::span<const CurvePoint> points) {
  std::size_t n = 0;
  while (n < points.size() && points[n].lag == n + 1) ++n;
  return n;
}

/// Looks for regularly spaced MI peaks on the dense integer-lag prefix.
///
/// The prefix is detrended by a power-law fit. A strict local maximum of the
/// MI / baseline ratio is a peak when the ratio is at least 1 + prominence,
/// is at least 1 + prominence times its base, and its excess over 1 is at
/// least `prominence` times the largest such excess. The base is the higher
/// of the two minima reached walking left and right until a higher ratio (or
/// the end of the prefix), as in topographic prominence. The period is the
/// most common spacing between consecutive peaks; every spacing, and the
/// first peak's lag, must lie within the tolerance of it.
inline std::optional<PeriodicitySignature> detect_periodicity(std::span<const CurvePoint> points,
                                                             const PeriodicityConfig& config = {}) {
  const std::size_t prefix = dense_prefix_length(points);
  if (prefix < std::max<std::size_t>(config.min_dense_prefix, 3)) return std::nullopt;
  const auto dense = points.first(prefix);

  PowerLawFit baseline;
  try {
    baseline = fit_power_law(dense);
  } catch (const Error&) {
    return std::nullopt;
  }

  std::vector<double> ratio(prefix, 0.0);
  for (std::size_t i = 0; i < prefix; ++i)
    if (dense[i].mi > 0.0) ratio[i] = dense[i].mi / std::exp(baseline.log_mi_at(double(dense[i].lag)));

  std::vector<std::size_t> candidates;
  double tallest = 0.0;
  const double step = 1.0 + config.prominence;
  for (std::size_t i = 1; i + 1 < prefix; ++i) {
    if (!(ratio[i] > ratio[i - 1] && ratio[i] > ratio[i + 1] && ratio[i] >= step)) continue;
    double left = ratio[i], right = ratio[i];
    for (std::size_t j = i; j-- > 0 && ratio[j] <= ratio[i];) left = std::min(left, ratio[j]);
    for (std::size_t j = i + 1; j < prefix && ratio[j] <= ratio[i]; ++j) right = std::min(right, ratio[j]);
    if (ratio[i] >= step * std::max(left, right)) {
      candidates.push_back(i);
      tallest = std::max(tallest, ratio[i] - 1.0);
    }
  }
  std::vector<std::size_t> peaks;
  for (std::size_t i : candidates)
    if (ratio[i] - 1.0 >= config.prominence * tallest) peaks.push_back(dense[i].lag);
  if (peaks.size() < 2) return std::nullopt;

  std::map<std::size_t, std::size_t> spacing_votes;
  for (std::size_t i = 1; i < peaks.size(); ++i) ++spacing_votes[peaks[i] - peaks[i - 1]];
  std::size_t period = 0, votes = 0;
  for (const auto& [spacing, count] : spacing_votes)
    if (count > votes) {  // std::map iterates ascending: ties keep the smaller spacing
      period = spacing;
      votes = count;
    }
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    const std::size_t gap = peaks[i] - peaks[i - 1];
    const std::size_t off = gap > period ? gap - period : period - gap;
    if (off > config.spacing_tolerance) return std::nullopt;
  }
  if (period < 2) return std::nullopt;
  // Dependencies repeat at multiples of the period, so the first peak must
  // sit at the period itself.
  const std::size_t first_off = peaks.front() > period ? peaks.front() - period : period - peaks.front();
  if (first_off > config.spacing_tolerance) return std::nullopt;
  return PeriodicitySignature{period, std::move(peaks), config.prominence};
}

inline std::optional<PeriodicitySignature> detect_periodicity(const DecayCurve& curve,
                                                             const PeriodicityConfig& config = {}) {
  return detect_periodicity(std::span<const CurvePoint>(curve.points), config);
}

inline constexpr double kNoiseThreshold = 1e-5;

/// Smallest sampled lag from which MI stays below `threshold` through the
/// end of the curve.
inline std::optional<std::size_t> noise_crossing(std::span<const CurvePoint> points,
                                                 double threshold = kNoiseThreshold) {
  std::optional<std::size_t> crossing;
  for (auto it = points.rbegin(); it != points.rend() && it->mi < threshold; ++it) crossing = it->lag;
  return crossing;
}

inline std::optional<std::size_t> noise_crossing(const DecayCurve& curve, double threshold = kNoiseThreshold) {
  return noise_crossing(std::span<const CurvePoint>(curve.points), threshold);
}

/// Index where the decay starts: the last point of the plateau around the
/// global maximum of the moving-median-smoothed curve, i.e. the last point at
/// or after that maximum whose smoothed MI is within `tolerance` (relative) of
/// it. Curves that decay from the first lag start at or near index 0; curves
/// that are flat before decaying start at the end of the flat region.
inline std::size_t decay_onset_index(std::span<const CurvePoint> points, std::size_t window = 5,
                                     double tolerance = 0.1) {
  const std::size_t n = points.size();
  if (n == 0) return 0;
  const std::size_t half = window / 2;
  std::vector<double> smooth(n), buf;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    buf.clear();
    for (std::size_t j = lo; j <= hi; ++j) buf.push_back(points[j].mi);
    auto mid = buf.begin() + std::ptrdiff_t((buf.size() - 1) / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    smooth[i] = *mid;
  }
  const std::size_t peak = static_cast<std::size_t>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
  std::size_t onset = peak;
  for (std::size_t i = peak; i < n; ++i)
    if (smooth[i] >= (1.0 - tolerance) * smooth[peak]) onset = i;
  return onset;
}

enum class DecayClass { power_law, broken_power_law, power_law_periodic, exponential };

inline std::string_view to_string(DecayClass c) {
  switch (c) {
    case DecayClass::power_law: return "PowerLaw";
    case DecayClass::broken_power_law: return "BrokenPowerLaw";
    case DecayClass::power_law_periodic: return "PowerLawPeriodic";
    case DecayClass::exponential: return "Exponential";
  }
  return "PowerLaw";
}

inline DecayClass parse_decay_class(std::string_view name) {
  for (auto c : {DecayClass::power_law, DecayClass::broken_power_law, DecayClass::power_law_periodic,
                 DecayClass::exponential})
    if (to_string(c) == name) return c;
  throw Error(errc::data, "unknown decay class '" + std::string(name) + "'");
}

struct ClassifierConfig {
  PeriodicityConfig periodicity;
  double exponential_r2_margin = 0.05;
  double broken_improvement = 0.15;
  double noise_threshold = kNoiseThreshold;
  std::size_t median_window = 5;
  double plateau_tolerance = 0.1;
  LagRange range;
};

struct CurveSample {
  std::size_t lag = 0;
  double mi = 0.0;
  double bias_floor = std::numeric_limits<double>::quiet_NaN();
};

struct ClassifiedFit {
  DecayClass decay_class = DecayClass::power_law;
  std::optional<PowerLawFit> power;
  std::optional<BrokenPowerLawFit> broken;
  std::optional<ExponentialFit> expo;
  std::optional<PeriodicitySignature> periodicity;
  std::optional<std::size_t> noise_crossing_d;
  double noise_threshold = kNoiseThreshold;
  // The estimator's bias floor exceeds the noise threshold where the
  // crossing was (or would have been) located.
  bool low_confidence = false;
  std::size_t max_sampled_lag = 0;
  std::size_t decay_onset_d = 0;
  ClassifierConfig config;
  // The curve the fit was made from; lets schedules re-evaluate the noise
  // crossing at another threshold.
  std::vector<CurveSample> samples;
};

inline bool noise_floor_exceeds(std::span<const CurvePoint> points, std::optional<std::size_t> crossing,
                                double threshold) {
  if (points.empty()) return false;
  const std::size_t from = crossing.value_or(points.back().lag);
  for (const auto& p : points)
    if (p.lag >= from && std::isfinite(p.bias_floor) && p.bias_floor > threshold) return true;
  return false;
}

/// Assigns a curve to one of the four decay classes:
///   1. regular peaks on the dense prefix        -> PowerLawPeriodic
///   2. exponential r2 beats power-law r2 by the margin, over the range
///      starting at the decay onset               -> Exponential
///   3. a single break improves SSE enough and both segments decay
///                                                -> BrokenPowerLaw
///   4. otherwise                                 -> PowerLaw
inline ClassifiedFit classify(std::span<const CurvePoint> points, const ClassifierConfig& config = {}) {
  std::vector<CurvePoint> in_range;
  for (const auto& p : points)
    if (config.range.contains(p.lag)) in_range.push_back(p);
  detail::require_points(detail::usable_samples(in_range, {}), 7, "classification");

  ClassifiedFit out;
  out.config = config;
  out.noise_threshold = config.noise_threshold;
  out.max_sampled_lag = points.back().lag;
  for (const auto& p : points) out.samples.push_back({p.lag, p.mi, p.bias_floor});
  out.noise_crossing_d = noise_crossing(points, config.noise_threshold);
  out.low_confidence = noise_floor_exceeds(points, out.noise_crossing_d, config.noise_threshold);

  if (auto period = detect_periodicity(in_range, config.periodicity)) {
    out.decay_class = DecayClass::power_law_periodic;
    out.periodicity = std::move(period);
    out.power = fit_power_law(in_range);
    out.decay_onset_d = in_range.front().lag;
    return out;
  }

  // The decaying range starts at the onset unless that leaves too few points.
  std::span<const CurvePoint> decaying(in_range);
  const std::size_t onset = decay_onset_index(decaying, config.median_window, config.plateau_tolerance);
  if (detail::usable_samples(decaying.subspan(onset), {}).lags.size() >= 7) decaying = decaying.subspan(onset);
  out.decay_onset_d = decaying.front().lag;

  const PowerLawFit power = fit_power_law(decaying);
  std::optional<ExponentialFit> expo;
  try {
    expo = fit_exponential(decaying);
  } catch (const Error& e) {
    if (e.code() != errc::non_decaying) throw;
  }
  if (expo && expo->r2 >= power.r2 + config.exponential_r2_margin) {
    out.decay_class = DecayClass::exponential;
    out.expo = expo;
    return out;
  }

  const BrokenPowerLawFit broken = fit_broken_power_law(decaying);
  if (broken.improvement >= config.broken_improvement && broken.left.slope < 0.0 &&
      broken.right.slope < 0.0) {
    out.decay_class = DecayClass::broken_power_law;
    out.broken = broken;
    return out;
  }

  out.decay_class = DecayClass::power_law;
  out.power = power;
  return out;
}

inline ClassifiedFit classify(const DecayCurve& curve, const ClassifierConfig& config = {}) {
  if (curve.points.empty()) throw Error(errc::too_few_points, "curve is empty");
  return classify(std::span<const CurvePoint>(curve.points), config);
}

}  // namespace lddscan
