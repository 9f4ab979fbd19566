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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>

#include "lddscan/estimator.hpp"

namespace lddscan {
namespace {

Corpus make_corpus(std::vector<Sequence> seqs, std::size_t alphabet) {
  return Corpus(std::move(seqs), alphabet, TokenMode::word, "test");
}

Corpus repeat_pattern(const Sequence& pattern, std::size_t length, std::size_t alphabet) {
  Sequence s(length);
  for (std::size_t i = 0; i < length; ++i) s[i] = pattern[i % pattern.size()];
  return make_corpus({s}, alphabet);
}

// Oracle: direct enumeration of every pair, MI as H(X) + H(Y) - H(X,Y).
struct BruteForce {
  std::map<std::pair<SymbolId, SymbolId>, std::uint64_t> joint;
  std::uint64_t total = 0;

  BruteForce(const Corpus& c, std::size_t d) {
    for (const auto& seq : c.sequences())
      for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t j = i + 1; j < seq.size(); ++j)
          if (j - i == d) {
            ++joint[{seq[i], seq[j]}];
            ++total;
          }
  }

  static double entropy(const std::map<SymbolId, std::uint64_t>& m, double n) {
    double h = 0;
    for (const auto& [k, c] : m) h -= c / n * std::log(c / n);
    return h;
  }

  double mi() const {
    std::map<SymbolId, std::uint64_t> px, py;
    double hxy = 0;
    const double n = double(total);
    for (const auto& [k, c] : joint) {
      px[k.first] += c;
      py[k.second] += c;
      hxy -= c / n * std::log(c / n);
    }
    return entropy(px, n) + entropy(py, n) - hxy;
  }
};

Corpus random_corpus(std::mt19937_64& rng, std::size_t max_len, std::size_t max_alphabet, std::size_t max_seqs) {
  const std::size_t k = 1 + rng() % max_alphabet;
  const std::size_t n_seqs = 1 + rng() % max_seqs;
  std::vector<Sequence> seqs(n_seqs);
  for (auto& s : seqs) {
    s.resize(1 + rng() % max_len);
    for (auto& x : s) x = static_cast<SymbolId>(rng() % k);
  }
  return make_corpus(std::move(seqs), k);
}

TEST(CountPairs, SingleSequence) {
  const PairCounts pc = count_pairs(make_corpus({{0, 1, 0, 1}}, 2), 1);
  EXPECT_EQ(pc.total_pairs, 3u);
  EXPECT_EQ(pc.joint, (std::vector<JointCount>{{0, 1, 2}, {1, 0, 1}}));
  EXPECT_EQ(pc.count(0, 1), 2u);
  EXPECT_EQ(pc.count(1, 1), 0u);
}

TEST(CountPairs, PairsNeverCrossSequenceBoundaries) {
  const PairCounts pc = count_pairs(make_corpus({{0, 1}, {1, 0}}, 2), 1);
  EXPECT_EQ(pc.total_pairs, 2u);
  EXPECT_EQ(pc.joint, (std::vector<JointCount>{{0, 1, 1}, {1, 0, 1}}));
}

TEST(CountPairs, LagBeyondEverySequenceIsEmpty) {
  try {
    count_pairs(make_corpus({{0, 1}, {1, 0, 1}}, 2), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::empty_lag);
  }
  EXPECT_THROW(count_pairs(make_corpus({{0, 1}}, 2), 0), Error);
}

TEST(CountPairs, MatchesNaiveDoubleLoopOnRandomCorpora) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const Corpus c = random_corpus(rng, 40, 6, 4);
    const std::size_t d = 1 + rng() % 12;
    std::uint64_t expected_total = 0;
    for (const auto& s : c.sequences()) expected_total += s.size() > d ? s.size() - d : 0;
    if (expected_total == 0) {
      EXPECT_THROW(count_pairs(c, d), Error);
      continue;
    }
    const PairCounts pc = count_pairs(c, d);
    const BruteForce bf(c, d);
    ASSERT_EQ(pc.total_pairs, expected_total);
    ASSERT_EQ(pc.total_pairs, bf.total);
    std::uint64_t sum = 0;
    for (const auto& e : pc.joint) {
      sum += e.count;
      ASSERT_EQ(e.count, bf.joint.at({e.x, e.y}));
    }
    ASSERT_EQ(sum, pc.total_pairs);
    ASSERT_EQ(pc.joint.size(), bf.joint.size());
  }
}

TEST(CountPairs, SparsePathForLargeAlphabets) {
  // 5000^2 cells exceeds the dense limit.
  std::mt19937_64 rng(5);
  Sequence s(3000);
  for (auto& x : s) x = static_cast<SymbolId>(rng() % 5000);
  const Corpus c = make_corpus({s}, 5000);
  for (std::size_t d : {1u, 7u, 100u}) {
    const PairCounts pc = count_pairs(c, d);
    const BruteForce bf(c, d);
    ASSERT_EQ(pc.joint.size(), bf.joint.size());
    for (const auto& e : pc.joint) ASSERT_EQ(e.count, bf.joint.at({e.x, e.y}));
    EXPECT_TRUE(std::is_sorted(pc.joint.begin(), pc.joint.end(), [](const JointCount& a, const JointCount& b) {
      return a.x != b.x ? a.x < b.x : a.y < b.y;
    }));
    EXPECT_NEAR(mi_from_counts(pc, {}), bf.mi(), 1e-12);
  }
}

TEST(MiFromCounts, DeterministicAlternationIsLn2) {
  const Corpus c = repeat_pattern({0, 1}, 100001, 2);
  EXPECT_NEAR(mi_from_counts(count_pairs(c, 1), {}), std::log(2.0), 1e-12);
}

TEST(MiFromCounts, ConstantSequenceIsZero) {
  const Corpus c = repeat_pattern({0}, 5000, 1);
  for (std::size_t d : {1u, 2u, 100u}) EXPECT_EQ(mi_from_counts(count_pairs(c, d), {}), 0.0);
}

TEST(MiFromCounts, HandEnumeratedEightSymbolExample) {
  // a,b,a,a,b,b,a,b at lag 1: pairs ab x3, ba x2, aa x1, bb x1; marginals
  // X = {a:4, b:3}, Y = {a:3, b:4}. Evaluated at 30 digits:
  // (3 ln(21/16) + 2 ln(14/9) + 2 ln(7/12)) / 7.
  const Corpus c = make_corpus({{0, 1, 0, 0, 1, 1, 0, 1}}, 2);
  const PairCounts pc = count_pairs(c, 1);
  EXPECT_EQ(pc.total_pairs, 7u);
  EXPECT_NEAR(mi_from_counts(pc, {}), 0.088781949934804247, 1e-15);
}

TEST(MiFromCounts, MillerMadowShiftsEachEntropyBySupportOver2N) {
  const Corpus c = make_corpus({{0, 1, 0, 0, 1, 1, 0, 1}}, 2);
  const PairCounts pc = count_pairs(c, 1);
  EstimatorConfig mm;
  mm.bias_correction = BiasCorrection::miller_madow;
  // Supports 2, 2 and 4 over N = 7 pairs: (1 + 1 - 3) / 14.
  EXPECT_NEAR(mi_from_counts(pc, mm), 0.088781949934804247 - 1.0 / 14.0, 1e-15);
  const MiEstimate est = estimate_mi(pc, BiasCorrection::miller_madow);
  EXPECT_EQ(est.support_x, 2u);
  EXPECT_EQ(est.support_xy, 4u);
  EXPECT_NEAR(est.bias_floor, 1.0 / 14.0, 1e-15);
}

TEST(MiFromCounts, MillerMadowIsClampedAtZero) {
  std::mt19937_64 rng(1);
  Sequence s(200);
  for (auto& x : s) x = static_cast<SymbolId>(rng() % 8);
  EstimatorConfig mm;
  mm.bias_correction = BiasCorrection::miller_madow;
  const Corpus c = make_corpus({s}, 8);
  for (std::size_t d = 1; d < 50; ++d) EXPECT_GE(mi_from_counts(count_pairs(c, d), mm), 0.0);
}

TEST(MiFromCounts, EmptyCountsAreAnError) {
  PairCounts empty;
  empty.lag = 3;
  EXPECT_THROW(mi_from_counts(empty, {}), Error);
}

TEST(DecayCurve, PeriodThreeCycleIsDeterministicAtEveryLag) {
  const Corpus c = repeat_pattern({0, 1, 2}, 300000, 3);
  const DecayCurve curve = decay_curve(c, LagGrid({1, 2, 3, 4, 6}), {});
  ASSERT_EQ(curve.points.size(), 5u);
  for (const auto& p : curve.points) EXPECT_NEAR(p.mi, std::log(3.0), 1e-9) << "lag " << p.lag;
}

TEST(DecayCurve, IidUniformCorpusSitsAtThePluginBias) {
  std::mt19937_64 rng(20240601);
  Sequence s(100001);
  for (auto& x : s) x = static_cast<SymbolId>(rng() % 4);
  const DecayCurve curve = decay_curve(make_corpus({s}, 4), LagGrid({1}), {});
  const double mi = curve.points[0].mi;
  const double bias = 9.0 / (2.0 * 100000.0);  // (K-1)^2 / 2N
  EXPECT_GT(mi, 0.0);
  EXPECT_LT(mi, 0.01);
  EXPECT_LT(mi, 4.0 * bias);
  EXPECT_NEAR(curve.points[0].bias_floor, bias, 1e-12);
}

TEST(DecayCurve, DropsLagsBelowMinPairCount) {
  const Corpus c = make_corpus({Sequence(1100, 0)}, 1);
  EstimatorConfig config;
  const DecayCurve curve = decay_curve(c, LagGrid({1, 50, 99, 100, 101, 500}), config);
  std::vector<std::size_t> kept, dropped;
  for (const auto& p : curve.points) kept.push_back(p.lag);
  for (const auto& d : curve.dropped) dropped.push_back(d.lag);
  EXPECT_EQ(kept, (std::vector<std::size_t>{1, 50, 99, 100}));
  EXPECT_EQ(dropped, (std::vector<std::size_t>{101, 500}));
  EXPECT_EQ(curve.dropped[0].pair_count, 999u);
}

TEST(DecayCurve, AllLagsEmptyIsAnError) {
  const Corpus c = make_corpus({{0, 1, 0}}, 2);
  EstimatorConfig config;
  config.min_pair_count = 1;
  EXPECT_THROW(decay_curve(c, LagGrid({3, 4}), config), Error);
  config.min_pair_count = 0;
  EXPECT_THROW(decay_curve(c, LagGrid({1}), config), Error);
}

TEST(DecayCurve, ThreadCountDoesNotChangeABit) {
  std::mt19937_64 rng(77);
  std::vector<Sequence> seqs(50, Sequence(400));
  for (auto& s : seqs)
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<SymbolId>(i > 0 && rng() % 3 ? s[i - 1] : rng() % 16);
  const Corpus c = make_corpus(seqs, 16);
  const LagGrid grid = default_lag_grid(399);
  EstimatorConfig one, many;
  one.threads = 1;
  many.threads = 8;
  const DecayCurve a = decay_curve(c, grid, one);
  const DecayCurve b = decay_curve(c, grid, many);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].lag, b.points[i].lag);
    EXPECT_EQ(std::memcmp(&a.points[i].mi, &b.points[i].mi, sizeof(double)), 0);
    // And equal to evaluating the lag on its own.
    const double alone = mi_from_counts(count_pairs(c, a.points[i].lag), {});
    EXPECT_EQ(std::memcmp(&a.points[i].mi, &alone, sizeof(double)), 0);
  }
}

TEST(MiInvariants, OracleEquivalenceOnTenThousandRandomCorpora) {
  std::mt19937_64 rng(1);
  int checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Corpus c = random_corpus(rng, 64, 5, 3);
    const std::size_t d = 1 + rng() % 16;
    const BruteForce bf(c, d);
    if (bf.total == 0) continue;
    const double mi = mi_from_counts(count_pairs(c, d), {});
    ASSERT_NEAR(mi, std::max(0.0, bf.mi()), 1e-12) << "trial " << trial;
    ++checked;
  }
  EXPECT_GT(checked, 9000);
}

TEST(MiInvariants, NonNegativeAndBoundedByLnMinSupport) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const Corpus c = random_corpus(rng, 80, 6, 3);
    const std::size_t d = 1 + rng() % 8;
    if (pairs_at_lag(c, d) == 0) continue;
    const MiEstimate est = estimate_mi(count_pairs(c, d), BiasCorrection::none);
    ASSERT_GE(est.mi, 0.0);
    ASSERT_LE(est.mi, std::log(double(std::min(est.support_x, est.support_y))) + 1e-12);
  }
}

TEST(MiInvariants, RelabelingAndReversalLeaveMiUnchanged) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const Corpus c = random_corpus(rng, 60, 5, 3);
    std::vector<SymbolId> relabel(c.alphabet_size());
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    std::vector<Sequence> mapped, reversed;
    for (const auto& s : c.sequences()) {
      Sequence m(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) m[i] = relabel[s[i]];
      mapped.push_back(m);
      reversed.emplace_back(s.rbegin(), s.rend());
    }
    const Corpus cm = make_corpus(mapped, c.alphabet_size());
    const Corpus cr = make_corpus(reversed, c.alphabet_size());
    for (std::size_t d = 1; d <= 5; ++d) {
      if (pairs_at_lag(c, d) == 0) continue;
      const double base = mi_from_counts(count_pairs(c, d), {});
      ASSERT_NEAR(mi_from_counts(count_pairs(cm, d), {}), base, 1e-12);
      ASSERT_NEAR(mi_from_counts(count_pairs(cr, d), {}), base, 1e-12);
    }
  }
}

TEST(DefaultLagGrid, DenseRegionOnly) {
  std::vector<std::size_t> expected(10);
  std::iota(expected.begin(), expected.end(), 1);
  EXPECT_EQ(default_lag_grid(10).lags(), expected);
  expected.resize(64);
  std::iota(expected.begin(), expected.end(), 1);
  EXPECT_EQ(default_lag_grid(64).lags(), expected);
  EXPECT_EQ(default_lag_grid(1).lags(), (std::vector<std::size_t>{1}));
  EXPECT_THROW(default_lag_grid(0), Error);
}

TEST(DefaultLagGrid, LogSpacedTail) {
  for (std::size_t max_lag : {65u, 100u, 783u, 1000u, 5000u, 100000u}) {
    const LagGrid grid = default_lag_grid(max_lag);
    const auto& lags = grid.lags();
    ASSERT_GE(lags.size(), 64u);
    for (std::size_t d = 1; d <= 64; ++d) ASSERT_EQ(lags[d - 1], d);
    EXPECT_EQ(lags.back(), max_lag);
    // Integer rounding of 64 * r^k perturbs each ratio by at most 0.5/64 per end.
    const double bound = std::pow(10.0, 1.0 / 32.0) * (1.0 + 1.0 / 64.0);
    for (std::size_t i = 64; i < lags.size(); ++i) {
      ASSERT_GT(lags[i], lags[i - 1]);
      ASSERT_LE(double(lags[i]) / double(lags[i - 1]), bound) << lags[i - 1] << " -> " << lags[i];
    }
    // About 32 lags per decade beyond the dense region.
    const double decades = std::log10(double(max_lag) / 64.0);
    EXPECT_NEAR(double(lags.size() - 64), 32.0 * decades, 2.0) << max_lag;
  }
}

TEST(LagGrid, RejectsBadGrids) {
  EXPECT_THROW(LagGrid({}), Error);
  EXPECT_THROW(LagGrid({0, 1}), Error);
  EXPECT_THROW(LagGrid({1, 3, 3}), Error);
}

}  // namespace
}  // namespace lddscan
