#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_support.hpp"
#include "toolcall/affordability.hpp"
#include "toolcall/synth.hpp"

using namespace toolcall;
using toolcall::testkit::make_record;

namespace {

double brute_force_best(const TraceSet& ts, std::size_t k) {
  const auto n = ts.size();
  double best = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) > k) continue;
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) g += ts.records[i].s_always_tool - ts.records[i].s_no_tool;
    best = std::max(best, g);
  }
  return best;
}

std::vector<std::string> all_ids(const TraceSet& ts) {
  std::vector<std::string> ids;
  for (const auto& r : ts.records) ids.push_back(r.instance_id);
  return ids;
}

}  // namespace

TEST(Budget, PerCallCostExamples) {
  EXPECT_EQ(per_call_cost(10000, 400), 25.0);
  EXPECT_EQ(per_call_cost(10000, 500), 20.0);
  EXPECT_EQ(per_call_cost(1234.5, 1), 1234.5);
  EXPECT_THROW(per_call_cost(10000, 0), InvalidArgument);
}

TEST(Budget, RemainingCallsExamples) {
  EXPECT_EQ(remaining_calls(10000, 25, 10), 390u);
  EXPECT_EQ(remaining_calls(10000, 25, 400), 0u);
  EXPECT_EQ(remaining_calls(10000, 25, 401), 0u);
  EXPECT_THROW(remaining_calls(10000, 0, 1), InvalidArgument);
  EXPECT_THROW(remaining_calls(10000, -1, 1), InvalidArgument);
}

TEST(Budget, RemainingCallsMatchesIntegerFloor) {
  for (long n = 0; n <= 401; ++n) {
    const long expect = std::max(0L, (10000 - 25 * n) / 25);
    EXPECT_EQ(remaining_calls(10000, 25, static_cast<std::size_t>(n)), static_cast<std::size_t>(expect)) << n;
  }
}

TEST(Budget, RemainingCallsNonIncreasing) {
  for (double cost : {1.0, 7.0, 20.0, 33.3333, 10000.0 / 3.0, 12345.0}) {
    std::size_t prev = remaining_calls(10000, cost, 0);
    for (std::size_t n = 1; n < 600; ++n) {
      const auto cur = remaining_calls(10000, cost, n);
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(Budget, CostFromKMapsBackToK) {
  for (std::size_t k = 1; k <= 1000; ++k) EXPECT_EQ(permitted_calls(10000, per_call_cost(10000, k), 5000), k) << k;
  EXPECT_EQ(permitted_calls(10000, 0.0, 37), 37u);
  EXPECT_EQ(permitted_calls(10000, 1.0, 37), 37u);
}

TEST(Budget, LedgerUsesQuestionCountWhenFree) {
  EXPECT_EQ(make_ledger({10000, 0.0, 50}, 20).remaining_calls, 30u);
  EXPECT_EQ(make_ledger({10000, 0.0, 50}, 70).remaining_calls, 0u);
  EXPECT_EQ(make_ledger({10000, 25.0, 0}, 10).remaining_calls, 390u);
}

TEST(OracleTopK, TableOneFixtureSelectsAllPositive) {
  const auto ts = aggregate_fixture({}, 42);
  const auto o = oracle_topk(ts, ts.size());
  EXPECT_EQ(o.selection.ids.size(), 300u);
}

TEST(OracleTopK, AllZeroGainSelectsNothing) {
  TraceSet ts;
  for (int i = 0; i < 10; ++i) ts.records.push_back(make_record("r" + std::to_string(i), i, 0.4, 0.4));
  const auto o = oracle_topk(ts, 10);
  EXPECT_TRUE(o.selection.ids.empty());
  EXPECT_EQ(o.total_gain, 0.0);
}

TEST(OracleTopK, TiesBrokenByArrival) {
  TraceSet ts;
  ts.records.push_back(make_record("late", 5, 0.25, 0.75));
  ts.records.push_back(make_record("early", 1, 0.25, 0.75));
  ts.records.push_back(make_record("best", 9, 0.0, 1.0));
  const auto o = oracle_topk(ts, 2);
  EXPECT_EQ(o.selection.ids, (std::vector<std::string>{"best", "early"}));
}

TEST(OracleTopK, KAboveSizeThrows) {
  TraceSet ts;
  ts.records.push_back(make_record("a", 0, 0.25, 0.75));
  EXPECT_THROW(oracle_topk(ts, 2), InvalidArgument);
}

TEST(OracleTopK, MatchesExhaustiveSubsetSearch) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + gen() % 15;
    const auto ts = testkit::dyadic_trace(n, gen, 16);
    for (std::size_t k = 0; k <= n; ++k) {
      const auto o = oracle_topk(ts, k);
      EXPECT_EQ(o.total_gain, brute_force_best(ts, k)) << "n=" << n << " k=" << k;
      EXPECT_LE(o.selection.ids.size(), k);
      EXPECT_EQ(realized_gain(o.selection, ts), o.total_gain);
    }
  }
}

TEST(OracleTopK, DiminishingReturns) {
  std::mt19937_64 gen(78);
  const auto ts = testkit::dyadic_trace(200, gen);
  double prev_gain = 0.0, prev_step = 2.0;
  for (std::size_t k = 1; k <= ts.size(); ++k) {
    const double g = oracle_topk(ts, k).total_gain;
    const double step = g - prev_gain;
    EXPECT_GE(step, 0.0);
    EXPECT_LE(step, prev_step);
    prev_gain = g;
    prev_step = step;
  }
}

TEST(CapFirstK, KeepsPrefixAndCountsOverflow) {
  std::vector<std::string> obs;
  for (int i = 0; i < 10; ++i) obs.push_back("c" + std::to_string(i));
  const auto c = cap_first_k(obs, 3);
  EXPECT_EQ(c.selection.ids, (std::vector<std::string>{"c0", "c1", "c2"}));
  EXPECT_EQ(c.over_budget, 7u);
  const auto all = cap_first_k(obs, 12);
  EXPECT_EQ(all.selection.ids, obs);
  EXPECT_EQ(all.over_budget, 0u);
}

TEST(CapFirstK, OverflowMatchesRecount) {
  std::mt19937_64 gen(79);
  const auto ts = testkit::dyadic_trace(300, gen);
  for (std::size_t k : {0u, 1u, 50u, 120u, 299u}) {
    const auto c = cap_first_k(observed_calls(ts), k);
    std::size_t seen = 0, over = 0;
    for (const auto& r : ts.records) {
      if (!r.self_called) continue;
      if (++seen > k) ++over;
    }
    EXPECT_EQ(c.over_budget, over);
    EXPECT_EQ(c.selection.ids.size(), seen - over);
  }
}

TEST(RealizedGain, EmptyAndUnknown) {
  TraceSet ts;
  ts.records.push_back(make_record("a", 0, 0.25, 0.75));
  EXPECT_EQ(realized_gain(SelectionSet{}, ts), 0.0);
  EXPECT_THROW(realized_gain(SelectionSet{{"zz"}, 1}, ts), InvalidArgument);
}

TEST(RealizedGain, ComplementOfOracleIsWorse) {
  std::mt19937_64 gen(80);
  for (int trial = 0; trial < 30; ++trial) {
    auto ts = testkit::dyadic_trace(12, gen, 64);
    ts.records[0].s_no_tool = 0.0;
    ts.records[0].s_always_tool = 1.0;
    const auto o = oracle_topk(ts, ts.size());
    SelectionSet comp;
    for (const auto& r : ts.records)
      if (std::find(o.selection.ids.begin(), o.selection.ids.end(), r.instance_id) == o.selection.ids.end())
        comp.ids.push_back(r.instance_id);
    EXPECT_LT(realized_gain(comp, ts), o.total_gain);
  }
}

TEST(Ndcg, HandComputedSixInstances) {
  TraceSet ts;
  const double deltas[6] = {0.25, -0.125, 0.0625, 0.0, -0.375, 0.125};
  for (int i = 0; i < 6; ++i) ts.records.push_back(make_record("r" + std::to_string(i), i, 0.5, 0.5 + deltas[i]));
  // Ascending ranks: r4=1 r1=2 r3=3 r2=4 r5=5 r0=6.
  const auto v = ndcg_at_k(ts, SelectionSet{{"r4", "r1"}, 2}, 2);
  const double dcg = 1.0 / std::log2(2.0) + 2.0 / std::log2(3.0);
  const double idcg = 6.0 / std::log2(2.0) + 5.0 / std::log2(3.0);
  ASSERT_TRUE(v.has_value());
  EXPECT_NEAR(*v, dcg / idcg, 1e-12);
}

TEST(Ndcg, RelevanceUsesAverageRanks) {
  TraceSet ts;
  ts.records.push_back(make_record("a", 0, 0.5, 0.75));
  ts.records.push_back(make_record("b", 1, 0.5, 0.5));
  ts.records.push_back(make_record("c", 2, 0.5, 0.75));
  ts.records.push_back(make_record("d", 3, 0.5, 0.25));
  EXPECT_EQ(gain_relevance(ts), (std::vector<double>{3.5, 2.0, 3.5, 1.0}));
}

TEST(Ndcg, OracleScoresOne) {
  std::mt19937_64 gen(81);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ts = testkit::dyadic_trace(100, gen, 1 << 20);
    std::size_t positive = 0;
    for (const auto& r : ts.records) positive += r.s_always_tool > r.s_no_tool;
    for (std::size_t k = 1; k <= positive; k += 7) {
      EXPECT_NEAR(*ndcg_at_k(ts, oracle_topk(ts, k).selection, k), 1.0, 1e-12);
    }
  }
}

TEST(Ndcg, EqualGainsAlwaysOne) {
  TraceSet ts;
  for (int i = 0; i < 8; ++i) ts.records.push_back(make_record("r" + std::to_string(i), i, 0.25, 0.5));
  EXPECT_EQ(*ndcg_at_k(ts, SelectionSet{{"r7", "r3"}, 3}, 3), 1.0);
  EXPECT_EQ(*ndcg_at_k(ts, SelectionSet{}, 5), 1.0);
}

TEST(Ndcg, ZeroKIsAbsent) {
  TraceSet ts;
  ts.records.push_back(make_record("a", 0, 0.25, 0.75));
  EXPECT_FALSE(ndcg_at_k(ts, SelectionSet{}, 0).has_value());
}

TEST(Ndcg, BoundedAndOneExactlyForTopRelevances) {
  std::mt19937_64 gen(82);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ts = testkit::dyadic_trace(20, gen, 8);
    const auto rel = gain_relevance(ts);
    auto ids = all_ids(ts);
    std::shuffle(ids.begin(), ids.end(), gen);
    const std::size_t k = 1 + gen() % ts.size();
    ids.resize(k);
    const auto idx = index_by_id(ts);

    const double v = *ndcg_at_k(ts, SelectionSet{ids, k}, k);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);

    std::sort(ids.begin(), ids.end(), [&](const auto& a, const auto& b) { return rel[idx.at(a)] > rel[idx.at(b)]; });
    std::vector<double> chosen, top = rel;
    for (const auto& id : ids) chosen.push_back(rel[idx.at(id)]);
    std::sort(top.begin(), top.end(), std::greater<>());
    top.resize(k);
    const double sorted_v = *ndcg_at_k(ts, SelectionSet{ids, k}, k);
    EXPECT_EQ(std::abs(sorted_v - 1.0) < 1e-12, chosen == top);
  }
}

TEST(GainCurve, ZeroCostMeansFullCoverage) {
  std::mt19937_64 gen(83);
  const auto ts = testkit::dyadic_trace(40, gen);
  const auto c = gain_curve(ts, oracle_selector(ts), {0.0});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].coverage_pct, 100.0);
}

TEST(GainCurve, OracleDominatesOtherSelectors) {
  std::mt19937_64 gen(84);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 4 + gen() % 12;
    const auto ts = testkit::dyadic_trace(n, gen, 32);
    auto ranking = all_ids(ts);
    std::shuffle(ranking.begin(), ranking.end(), gen);
    std::vector<double> costs{0.0};
    for (std::size_t k = 1; k <= n; ++k) costs.push_back(per_call_cost(kDefaultBudget, k));
    const auto best = gain_curve(ts, oracle_selector(ts), costs);
    const auto obs = gain_curve(ts, observed_selector(ts), costs);
    const auto rnd = gain_curve(ts, ranked_selector(ranking), costs);
    for (std::size_t i = 0; i < costs.size(); ++i) {
      const auto k = permitted_calls(kDefaultBudget, costs[i], n);
      EXPECT_EQ(best[i].gain, brute_force_best(ts, k));
      EXPECT_GE(best[i].gain, obs[i].gain);
      EXPECT_GE(best[i].gain, rnd[i].gain);
    }
  }
}

TEST(GainCurve, CoverageLevelsRoundTrip) {
  const auto costs = cost_levels_for_coverage(kDefaultBudget, 500, {10, 20, 50, 100});
  ASSERT_EQ(costs.size(), 4u);
  EXPECT_EQ(costs[0], 200.0);
  EXPECT_EQ(costs[3], 20.0);
  EXPECT_EQ(permitted_calls(kDefaultBudget, costs[2], 500), 250u);
}

TEST(GainCurve, NegativeCostRejected) {
  TraceSet ts;
  ts.records.push_back(make_record("a", 0, 0.25, 0.75));
  EXPECT_THROW(gain_curve(ts, oracle_selector(ts), {-1.0}), InvalidArgument);
}
