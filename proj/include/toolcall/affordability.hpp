#pragma once

// Budgeted call allocation: per-call cost and remaining-call arithmetic, the
// oracle top-K allocation, first-K capping of observed calls, realized gain,
// NDCG@K against the oracle ranking, and gain curves over cost levels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "toolcall/errors.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/table.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

inline constexpr double kDefaultBudget = 10000.0;

struct BudgetSpec {
  double total_budget = kDefaultBudget;
  double per_call_cost = 0.0;
  std::size_t n_questions = 0;
};

struct BudgetLedger {
  std::size_t n_finished = 0;
  std::size_t n_calls = 0;
  std::size_t remaining_calls = 0;

  friend bool operator==(const BudgetLedger&, const BudgetLedger&) = default;
};

struct SelectionSet {
  std::vector<std::string> ids;  // selection order
  std::size_t cap = 0;
};

namespace detail {

inline bool is_exact_integer(double v) {
  return std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 9.0e15;
}

// floor(num / den) for den > 0. Integer inputs take an exact path; otherwise a
// quotient within 1e-9 relative of an integer snaps to it, so that a cost of
// B/K maps back to K calls.
inline double floor_div(double num, double den) {
  if (is_exact_integer(num) && is_exact_integer(den)) {
    const auto n = static_cast<std::int64_t>(num);
    const auto d = static_cast<std::int64_t>(den);
    std::int64_t q = n / d;
    if ((n % d != 0) && ((n < 0) != (d < 0))) --q;
    return static_cast<double>(q);
  }
  const double q = num / den;
  const double r = std::round(q);
  if (std::fabs(q - r) <= 1e-9 * std::max(1.0, std::fabs(q))) return r;
  return std::floor(q);
}

}  // namespace detail

inline double per_call_cost(double budget, std::size_t k_calls) {
  if (k_calls == 0) throw InvalidArgument("per_call_cost: k_calls must be >= 1");
  return budget / static_cast<double>(k_calls);
}

// floor((budget - cost * n_calls) / cost), clamped at 0.
inline std::size_t remaining_calls(double budget, double cost, std::size_t n_calls) {
  if (!(cost > 0.0)) throw InvalidArgument("remaining_calls: cost must be > 0");
  const double y = detail::floor_div(budget - cost * static_cast<double>(n_calls), cost);
  return y <= 0.0 ? 0 : static_cast<std::size_t>(y);
}

// K permitted by a budget: n when the cost is zero, else floor(B / c) capped at n.
inline std::size_t permitted_calls(double budget, double cost, std::size_t n) {
  if (cost < 0.0) throw InvalidArgument("permitted_calls: cost must be >= 0");
  if (cost == 0.0) return n;
  return std::min(n, remaining_calls(budget, cost, 0));
}

inline BudgetLedger make_ledger(const BudgetSpec& spec, std::size_t n_calls, std::size_t n_finished = 0) {
  BudgetLedger l{n_finished, n_calls, 0};
  if (spec.per_call_cost > 0.0) {
    l.remaining_calls = remaining_calls(spec.total_budget, spec.per_call_cost, n_calls);
  } else {
    l.remaining_calls = spec.n_questions > n_calls ? spec.n_questions - n_calls : 0;
  }
  return l;
}

struct OracleSelection {
  SelectionSet selection;
  double total_gain = 0.0;
};

// Top-K by marginal gain (descending, ties by ascending seq_index), keeping only
// instances whose gain exceeds eps.
inline OracleSelection oracle_topk(const TraceSet& ts, std::size_t k, double eps = kDefaultEps) {
  if (k > ts.size()) throw InvalidArgument("oracle_topk: K exceeds trace size");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (marginal_gain(ts.records[i]).delta > eps) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ga = marginal_gain(ts.records[a]).delta, gb = marginal_gain(ts.records[b]).delta;
    if (ga != gb) return ga > gb;
    return ts.records[a].seq_index < ts.records[b].seq_index;
  });
  OracleSelection out;
  out.selection.cap = k;
  for (std::size_t j = 0; j < std::min(k, order.size()); ++j) {
    const auto& r = ts.records[order[j]];
    out.selection.ids.push_back(r.instance_id);
    out.total_gain += marginal_gain(r).delta;
  }
  return out;
}

// Ids of Self-decision calls in arrival order.
inline std::vector<std::string> observed_calls(const TraceSet& ts) {
  std::vector<std::string> ids;
  for (const auto& r : ts.records)
    if (r.self_called) ids.push_back(r.instance_id);
  return ids;
}

struct CappedSelection {
  SelectionSet selection;
  std::size_t over_budget = 0;  // discarded calls
};

inline CappedSelection cap_first_k(const std::vector<std::string>& observed, std::size_t k) {
  CappedSelection out;
  out.selection.cap = k;
  const auto keep = std::min(k, observed.size());
  out.selection.ids.assign(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(keep));
  out.over_budget = observed.size() - keep;
  return out;
}

inline double realized_gain(const SelectionSet& sel, const TraceSet& ts) {
  const auto idx = index_by_id(ts);
  double g = 0.0;
  for (const auto& id : sel.ids) {
    auto it = idx.find(id);
    if (it == idx.end()) throw InvalidArgument("realized_gain: unknown instance id '" + id + "'");
    g += marginal_gain(ts.records[it->second]).delta;
  }
  return g;
}

// Ascending ordinal ranks (1-based) of the marginal gains, averaged over ties.
inline std::vector<double> gain_relevance(const TraceSet& ts) {
  const auto n = ts.size();
  std::vector<double> gain(n);
  for (std::size_t i = 0; i < n; ++i) gain[i] = marginal_gain(ts.records[i]).delta;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gain[a] < gain[b]; });
  std::vector<double> rel(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && gain[order[j + 1]] == gain[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) rel[order[t]] = avg;
    i = j + 1;
  }
  return rel;
}

// The ranking places the selection first (in its own order), then every other
// instance in arrival order. Absent for K = 0.
inline std::optional<double> ndcg_at_k(const TraceSet& ts, const SelectionSet& sel, std::size_t k) {
  if (k == 0 || ts.empty()) return std::nullopt;
  k = std::min(k, ts.size());
  const auto rel = gain_relevance(ts);
  const auto idx = index_by_id(ts);

  std::vector<std::size_t> ranking;
  std::vector<bool> taken(ts.size(), false);
  for (const auto& id : sel.ids) {
    auto it = idx.find(id);
    if (it == idx.end()) throw InvalidArgument("ndcg_at_k: unknown instance id '" + id + "'");
    if (taken[it->second]) throw InvalidArgument("ndcg_at_k: duplicate instance id '" + id + "'");
    taken[it->second] = true;
    ranking.push_back(it->second);
  }
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (!taken[i]) ranking.push_back(i);

  auto discount = [](std::size_t pos) { return 1.0 / std::log2(static_cast<double>(pos) + 2.0); };
  double dcg = 0.0;
  for (std::size_t p = 0; p < k; ++p) dcg += rel[ranking[p]] * discount(p);
  auto ideal = rel;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t p = 0; p < k; ++p) idcg += ideal[p] * discount(p);
  return std::min(1.0, dcg / idcg);
}

struct SelectorResult {
  SelectionSet selection;
  std::size_t calls_made = 0;
};

// Produces the selection made when K calls are permitted.
using Selector = std::function<SelectorResult(std::size_t k)>;

inline Selector oracle_selector(const TraceSet& ts, double eps = kDefaultEps) {
  return [&ts, eps](std::size_t k) {
    auto o = oracle_topk(ts, k, eps);
    const auto n = o.selection.ids.size();
    return SelectorResult{std::move(o.selection), n};
  };
}

// First-K capping of the Self-decision calls; calls_made counts every observed
// call event, including those beyond the budget.
inline Selector observed_selector(const TraceSet& ts) {
  auto observed = observed_calls(ts);
  std::size_t events = 0;
  for (const auto& r : ts.records) events += r.self_call_count;
  return [observed = std::move(observed), events](std::size_t k) {
    return SelectorResult{cap_first_k(observed, k).selection, events};
  };
}

// Takes the first K ids of a fixed ranking.
inline Selector ranked_selector(std::vector<std::string> ranking) {
  return [ranking = std::move(ranking)](std::size_t k) {
    SelectorResult r;
    r.selection.cap = k;
    const auto keep = std::min(k, ranking.size());
    r.selection.ids.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(keep));
    r.calls_made = keep;
    return r;
  };
}

struct GainCurvePoint {
  double cost = 0.0;
  double coverage_pct = 0.0;
  double gain = 0.0;
  std::size_t calls_made = 0;
  std::optional<double> ndcg;
};

inline std::vector<GainCurvePoint> gain_curve(const TraceSet& ts, const Selector& selector,
                                              const std::vector<double>& cost_levels,
                                              double budget = kDefaultBudget) {
  if (ts.empty()) throw InvalidArgument("gain_curve: empty trace");
  std::vector<GainCurvePoint> out;
  for (double c : cost_levels) {
    if (!(c >= 0.0)) throw InvalidArgument("gain_curve: cost levels must be >= 0");
    const auto k = permitted_calls(budget, c, ts.size());
    auto res = selector(k);
    out.push_back({c, 100.0 * static_cast<double>(k) / static_cast<double>(ts.size()),
                   realized_gain(res.selection, ts), res.calls_made, ndcg_at_k(ts, res.selection, k)});
  }
  return out;
}

// Cost levels B/K for K = round(pct * n / 100), skipping K = 0.
inline std::vector<double> cost_levels_for_coverage(double budget, std::size_t n, const std::vector<double>& pcts) {
  std::vector<double> costs;
  for (double p : pcts) {
    const auto k = static_cast<std::size_t>(std::llround(p * static_cast<double>(n) / 100.0));
    if (k == 0) continue;
    costs.push_back(per_call_cost(budget, std::min(k, n)));
  }
  return costs;
}

inline Table to_table(const std::vector<GainCurvePoint>& curve) {
  Table t{{"cost", "coverage_pct", "gain", "calls", "ndcg"}, {}};
  for (const auto& p : curve) t.add({p.cost, p.coverage_pct, p.gain, count_cell(p.calls_made), real_cell(p.ndcg)});
  return t;
}

}  // namespace toolcall
