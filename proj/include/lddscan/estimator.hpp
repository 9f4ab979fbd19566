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

// Dependency decay curves: plug-in mutual information between the symbols at
// positions t and t+d, pooled over every sequence of a corpus.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lddscan/corpus.hpp"
#include "lddscan/error.hpp"

namespace lddscan {

/// Strictly increasing list of positive lags.
class LagGrid {
 public:
  explicit LagGrid(std::vector<std::size_t> lags) : lags_(std::move(lags)) {
    if (lags_.empty()) throw Error(errc::usage, "lag grid is empty");
    if (lags_.front() < 1) throw Error(errc::usage, "lags must be positive");
    for (std::size_t i = 1; i < lags_.size(); ++i)
      if (lags_[i] <= lags_[i - 1]) throw Error(errc::usage, "lags must be strictly increasing");
  }

  const std::vector<std::size_t>& lags() const { return lags_; }
  std::size_t size() const { return lags_.size(); }
  std::size_t max_lag() const { return lags_.back(); }

 private:
  std::vector<std::size_t> lags_;
};

inline constexpr std::size_t kDenseLagLimit = 64;
inline constexpr int kLagsPerDecade = 32;

/// Every lag 1..64, then roughly 32 log-spaced lags per decade up to and
/// including `max_lag`.
inline LagGrid default_lag_grid(std::size_t max_lag) {
  if (max_lag < 1) throw Error(errc::usage, "max lag must be at least 1");
  std::vector<std::size_t> lags;
  const std::size_t dense = std::min(kDenseLagLimit, max_lag);
  for (std::size_t d = 1; d <= dense; ++d) lags.push_back(d);
  for (int k = 1; lags.back() < max_lag; ++k) {
    const double x = static_cast<double>(kDenseLagLimit) * std::pow(10.0, k / double(kLagsPerDecade));
    const auto d = static_cast<std::size_t>(std::llround(x));
    if (d >= max_lag) {
      lags.push_back(max_lag);
    } else if (d > lags.back()) {
      lags.push_back(d);
    }
  }
  return LagGrid(std::move(lags));
}

enum class BiasCorrection { none, miller_madow };

inline std::string_view to_string(BiasCorrection c) {
  return c == BiasCorrection::none ? "none" : "miller-madow";
}

inline BiasCorrection parse_bias_correction(std::string_view name) {
  if (name == "none") return BiasCorrection::none;
  if (name == "miller-madow" || name == "miller_madow") return BiasCorrection::miller_madow;
  throw Error(errc::usage, "unknown bias correction '" + std::string(name) + "'");
}

struct EstimatorConfig {
  BiasCorrection bias_correction = BiasCorrection::none;
  std::uint64_t min_pair_count = 1000;
  // Worker threads for decay_curve; 0 picks the hardware concurrency.
  unsigned threads = 0;
};

struct JointCount {
  SymbolId x = 0;
  SymbolId y = 0;
  std::uint64_t count = 0;

  friend bool operator==(const JointCount&, const JointCount&) = default;
};

/// Empirical joint of (symbol at t, symbol at t+lag); entries sorted by (x, y).
struct PairCounts {
  std::size_t lag = 0;
  std::uint64_t total_pairs = 0;
  std::vector<JointCount> joint;

  std::uint64_t count(SymbolId x, SymbolId y) const {
    auto it = std::lower_bound(joint.begin(), joint.end(), JointCount{x, y, 0},
                               [](const JointCount& a, const JointCount& b) {
                                 return a.x != b.x ? a.x < b.x : a.y < b.y;
                               });
    return it != joint.end() && it->x == x && it->y == y ? it->count : 0;
  }
};

inline std::uint64_t pairs_at_lag(const Corpus& corpus, std::size_t lag) {
  std::uint64_t n = 0;
  for (const auto& seq : corpus.sequences())
    if (seq.size() > lag) n += seq.size() - lag;
  return n;
}

// Joint tables up to 2^24 cells are counted densely; larger alphabets
// (word-level text) fall back to a hash map.
inline constexpr std::uint64_t kDenseJointCells = std::uint64_t{1} << 24;

/// Counts symbol pairs `lag` positions apart. Pairs never span two sequences.
inline PairCounts count_pairs(const Corpus& corpus, std::size_t lag) {
  if (lag < 1) throw Error(errc::usage, "lag must be positive");
  PairCounts out;
  out.lag = lag;
  out.total_pairs = pairs_at_lag(corpus, lag);
  if (out.total_pairs == 0)
    throw Error(errc::empty_lag, "no symbol pairs at lag " + std::to_string(lag));

  const std::uint64_t k = corpus.alphabet_size();
  if (k * k <= kDenseJointCells) {
    std::vector<std::uint64_t> cells(k * k, 0);
    for (const auto& seq : corpus.sequences()) {
      if (seq.size() <= lag) continue;
      const SymbolId* a = seq.data();
      const SymbolId* b = seq.data() + lag;
      const std::size_t n = seq.size() - lag;
      for (std::size_t t = 0; t < n; ++t) ++cells[std::uint64_t{a[t]} * k + b[t]];
    }
    for (std::uint64_t i = 0; i < cells.size(); ++i)
      if (cells[i] != 0)
        out.joint.push_back({static_cast<SymbolId>(i / k), static_cast<SymbolId>(i % k), cells[i]});
  } else {
    std::unordered_map<std::uint64_t, std::uint64_t> cells;
    for (const auto& seq : corpus.sequences()) {
      if (seq.size() <= lag) continue;
      for (std::size_t t = 0; t + lag < seq.size(); ++t)
        ++cells[(std::uint64_t{seq[t]} << 32) | seq[t + lag]];
    }
    out.joint.reserve(cells.size());
    for (const auto& [key, c] : cells)
      out.joint.push_back({static_cast<SymbolId>(key >> 32), static_cast<SymbolId>(key & 0xFFFFFFFFu), c});
    std::sort(out.joint.begin(), out.joint.end(), [](const JointCount& a, const JointCount& b) {
      return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
  }
  return out;
}

/// Full result of one MI evaluation.
struct MiEstimate {
  double mi = 0.0;         // reported value (bias-corrected when requested), nats
  double plugin_mi = 0.0;  // uncorrected plug-in value, nats
  std::size_t support_x = 0;
  std::size_t support_y = 0;
  std::size_t support_xy = 0;
  // Expected plug-in MI of independent variables with these supports,
  // (Kx-1)(Ky-1)/(2N); values below it are not resolvable.
  double bias_floor = 0.0;
};

inline MiEstimate estimate_mi(const PairCounts& counts, BiasCorrection correction) {
  if (counts.total_pairs == 0)
    throw Error(errc::empty_lag, "no symbol pairs at lag " + std::to_string(counts.lag));

  std::unordered_map<SymbolId, std::uint64_t> px;
  std::unordered_map<SymbolId, std::uint64_t> py;
  for (const auto& e : counts.joint) {
    px[e.x] += e.count;
    py[e.y] += e.count;
  }
  const double n = static_cast<double>(counts.total_pairs);
  double mi = 0.0;
  for (const auto& e : counts.joint) {
    const double c = static_cast<double>(e.count);
    const double denom = static_cast<double>(px[e.x]) * static_cast<double>(py[e.y]);
    mi += c * std::log(c * n / denom);
  }
  mi /= n;

  MiEstimate est;
  est.support_x = px.size();
  est.support_y = py.size();
  est.support_xy = counts.joint.size();
  est.plugin_mi = std::max(0.0, mi);
  est.bias_floor = (double(est.support_x) - 1.0) * (double(est.support_y) - 1.0) / (2.0 * n);
  est.mi = est.plugin_mi;
  if (correction == BiasCorrection::miller_madow) {
    // Each entropy gains (support - 1) / 2N; MI = H(X) + H(Y) - H(X,Y).
    const double shift = ((double(est.support_x) - 1.0) + (double(est.support_y) - 1.0) -
                          (double(est.support_xy) - 1.0)) / (2.0 * n);
    est.mi = std::max(0.0, mi + shift);
  }
  return est;
}

inline double mi_from_counts(const PairCounts& counts, const EstimatorConfig& config) {
  return estimate_mi(counts, config.bias_correction).mi;
}

struct CurvePoint {
  std::size_t lag = 0;
  double mi = 0.0;
  std::uint64_t pair_count = 0;
  // Unknown (NaN) when the curve was read back from CSV without its sidecar.
  double bias_floor = std::numeric_limits<double>::quiet_NaN();
  std::size_t support_x = 0;
  std::size_t support_y = 0;
};

struct DroppedLag {
  std::size_t lag = 0;
  std::uint64_t pair_count = 0;
};

struct DecayCurve {
  std::vector<CurvePoint> points;
  EstimatorConfig config;
  // Lags omitted because they had fewer than config.min_pair_count pairs.
  std::vector<DroppedLag> dropped;

  std::size_t max_lag() const { return points.empty() ? 0 : points.back().lag; }
};

/// MI at every lag of `grid`. Lags are evaluated on worker threads; each
/// result lands in its own slot, so the curve does not depend on scheduling.
inline DecayCurve decay_curve(const Corpus& corpus, const LagGrid& grid, const EstimatorConfig& config) {
  if (config.min_pair_count < 1) throw Error(errc::usage, "min_pair_count must be at least 1");
  const auto& lags = grid.lags();
  std::vector<CurvePoint> slots(lags.size());
  std::vector<unsigned char> kept(lags.size(), 0);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < lags.size(); i = next++) {
      CurvePoint& p = slots[i];
      p.lag = lags[i];
      p.pair_count = pairs_at_lag(corpus, p.lag);
      if (p.pair_count < config.min_pair_count) continue;
      const MiEstimate est = estimate_mi(count_pairs(corpus, p.lag), config.bias_correction);
      p.mi = est.mi;
      p.bias_floor = est.bias_floor;
      p.support_x = est.support_x;
      p.support_y = est.support_y;
      kept[i] = 1;
    }
  };

  unsigned n_threads = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(lags.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }

  DecayCurve curve;
  curve.config = config;
  for (std::size_t i = 0; i < lags.size(); ++i) {
    if (kept[i]) curve.points.push_back(slots[i]);
    else curve.dropped.push_back({slots[i].lag, slots[i].pair_count});
  }
  if (curve.points.empty())
    throw Error(errc::empty_lag, "every lag in the grid has fewer than " +
                                     std::to_string(config.min_pair_count) + " pairs");
  return curve;
}

}  // namespace lddscan
