#pragma once

// Call/no-call policies and their offline evaluation over a trace.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "toolcall/affordability.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/table.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

struct NoToolPolicy {};
struct AlwaysToolPolicy {};
struct SelfDecisionPolicy {};
struct OraclePolicy {};
struct EstimatorThresholdPolicy {
  double tau = 0.5;
};
struct EstimatorBudgetPolicy {
  std::size_t k = 0;
};

using PolicyKind = std::variant<NoToolPolicy, AlwaysToolPolicy, SelfDecisionPolicy, OraclePolicy,
                                EstimatorThresholdPolicy, EstimatorBudgetPolicy>;

inline std::string policy_name(const PolicyKind& k) {
  struct Visitor {
    std::string operator()(const NoToolPolicy&) const { return "no-tool"; }
    std::string operator()(const AlwaysToolPolicy&) const { return "always-tool"; }
    std::string operator()(const SelfDecisionPolicy&) const { return "self-decision"; }
    std::string operator()(const OraclePolicy&) const { return "oracle"; }
    std::string operator()(const EstimatorThresholdPolicy& p) const {
      char buf[48];
      std::snprintf(buf, sizeof buf, "estimator-threshold(%g)", p.tau);
      return buf;
    }
    std::string operator()(const EstimatorBudgetPolicy& p) const {
      return "estimator-budget(" + std::to_string(p.k) + ")";
    }
  };
  return std::visit(Visitor{}, k);
}

struct PolicyContext {
  double eps = kDefaultEps;
  // Estimator probabilities by instance id.
  std::unordered_map<std::string, double> probabilities;
  // Precomputed selection for budget-coupled policies.
  std::optional<std::unordered_set<std::string>> budget_selection;

  double probability(const TraceRecord& r) const {
    auto it = probabilities.find(r.instance_id);
    if (it == probabilities.end()) throw MissingEmbedding("no estimator probability for " + r.instance_id);
    return it->second;
  }
};

struct PolicyOutcome {
  std::string policy;
  double mean_score = 0.0;
  std::size_t total_calls = 0;
  std::vector<bool> decisions;  // trace order
};

inline void check_policy(const PolicyKind& k) {
  if (const auto* t = std::get_if<EstimatorThresholdPolicy>(&k)) {
    if (!(t->tau > 0.0 && t->tau < 1.0)) throw InvalidArgument("estimator threshold must lie in (0,1)");
  }
}

inline bool decide(const PolicyKind& kind, const TraceRecord& r, const PolicyContext& ctx) {
  struct Visitor {
    const TraceRecord& r;
    const PolicyContext& ctx;
    bool operator()(const NoToolPolicy&) const { return false; }
    bool operator()(const AlwaysToolPolicy&) const { return true; }
    bool operator()(const SelfDecisionPolicy&) const { return r.self_called; }
    bool operator()(const OraclePolicy&) const { return r.s_always_tool - r.s_no_tool > ctx.eps; }
    bool operator()(const EstimatorThresholdPolicy& p) const { return ctx.probability(r) >= p.tau; }
    bool operator()(const EstimatorBudgetPolicy&) const {
      ctx.probability(r);
      if (!ctx.budget_selection) throw InvalidArgument("budget policy: selection not prepared");
      return ctx.budget_selection->count(r.instance_id) > 0;
    }
  };
  check_policy(kind);
  return std::visit(Visitor{r, ctx}, kind);
}

// Top-K by probability (descending, ties by ascending seq_index). probas is
// aligned with ts.records.
inline SelectionSet budget_topk_by_proba(const TraceSet& ts, const std::vector<double>& probas, std::size_t k) {
  if (probas.size() != ts.size()) throw InvalidArgument("budget_topk_by_proba: probability count mismatch");
  if (k > ts.size()) throw InvalidArgument("budget_topk_by_proba: K exceeds trace size");
  std::vector<std::size_t> order(ts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probas[a] != probas[b]) return probas[a] > probas[b];
    return ts.records[a].seq_index < ts.records[b].seq_index;
  });
  SelectionSet out;
  out.cap = k;
  for (std::size_t j = 0; j < k; ++j) out.ids.push_back(ts.records[order[j]].instance_id);
  return out;
}

inline std::vector<double> aligned_probabilities(const TraceSet& ts, const PolicyContext& ctx) {
  std::vector<double> p;
  p.reserve(ts.size());
  for (const auto& r : ts.records) p.push_back(ctx.probability(r));
  return p;
}

inline PolicyOutcome evaluate_policy(const TraceSet& ts, const PolicyKind& kind, PolicyContext ctx = {}) {
  if (ts.empty()) throw InvalidArgument("evaluate_policy: empty trace");
  check_policy(kind);
  if (const auto* b = std::get_if<EstimatorBudgetPolicy>(&kind)) {
    if (b->k > ts.size()) throw InvalidArgument("estimator budget K exceeds trace size");
    const auto sel = budget_topk_by_proba(ts, aligned_probabilities(ts, ctx), b->k);
    ctx.budget_selection.emplace(sel.ids.begin(), sel.ids.end());
  }
  PolicyOutcome out;
  out.policy = policy_name(kind);
  double total = 0.0;
  for (const auto& r : ts.records) {
    const bool call = decide(kind, r, ctx);
    out.decisions.push_back(call);
    total += call ? r.s_always_tool : r.s_no_tool;
    if (std::holds_alternative<SelfDecisionPolicy>(kind)) {
      out.total_calls += r.self_call_count;
    } else if (call) {
      ++out.total_calls;
    }
  }
  out.mean_score = total / static_cast<double>(ts.size());
  return out;
}

// "0.83 (300)" style cell.
inline std::string score_with_calls(const PolicyOutcome& o) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f (%zu)", o.mean_score, o.total_calls);
  return buf;
}

inline Table to_table(const std::vector<PolicyOutcome>& outcomes) {
  Table t{{"policy", "score", "calls", "summary"}, {}};
  for (const auto& o : outcomes) t.add({o.policy, o.mean_score, count_cell(o.total_calls), score_with_calls(o)});
  return t;
}

}  // namespace toolcall
