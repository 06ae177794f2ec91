#pragma once

// Seeded synthetic traces and embeddings used as test substrates and demo
// inputs.
//
// synth_trace places records into the 3x3 bucket-transition cells in exact
// proportions, derives descriptive signals from the normative labels with
// configurable noise, and emits per-layer embeddings whose class means are
// separated along fixed directions on one signal layer.
//
// aggregate_fixture builds a trace hitting prescribed aggregate statistics
// (mean scores, number of positive-gain instances, mean per-instance best).

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "toolcall/embeddings.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/random.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

using CellMix = std::array<std::array<double, 3>, 3>;
using CellCounts = std::array<std::array<std::size_t, 3>, 3>;

struct SynthConfig {
  std::size_t n = 500;
  CellMix bucket_mix = {{{1.0 / 9, 1.0 / 9, 1.0 / 9}, {1.0 / 9, 1.0 / 9, 1.0 / 9}, {1.0 / 9, 1.0 / 9, 1.0 / 9}}};
  // Sign of the gain inside diagonal cells: {positive, neutral, negative}.
  std::array<double, 3> diagonal_regime = {0.0, 1.0, 0.0};
  BucketThresholds buckets;

  std::size_t dim = 16;
  std::size_t layers = 1;
  std::size_t signal_layer = 0;
  double margin = 6.0;       // distance between class means, in noise std units
  double label_noise = 0.0;  // probability the embedded class disagrees with the true label
  bool with_embeddings = true;

  double self_flip = 0.0;         // P(self_called != 1{U* = +1})
  double repeat_call_rate = 0.0;  // P(two call events | called)
  double perceived_flip = 0.0;    // P(perceived need != N*)
  double perceived_missing = 0.0;

  std::string model_id = "synthetic-model";
  std::string task_name = "synthetic";
};

struct LayerKey {
  EmbeddingCondition condition;
  int layer;
  auto operator<=>(const LayerKey&) const = default;
};

struct SynthOutput {
  TraceSet traces;
  std::map<LayerKey, EmbeddingMatrix> embeddings;
};

// Embedding files for a condition live side by side, one per layer; row i of
// every layer file belongs to the same record.
inline std::string embedding_file_name(EmbeddingCondition c, int layer) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_L%03d.emb1", layer);
  return to_string(c) + buf;
}

// Largest-remainder apportionment of n over the nine cells.
inline CellCounts apportion(const CellMix& mix, std::size_t n) {
  double sum = 0.0;
  for (const auto& row : mix)
    for (double f : row) {
      if (!(f >= 0.0)) throw InvalidArgument("bucket mix fractions must be non-negative");
      sum += f;
    }
  if (std::fabs(sum - 1.0) > 1e-9) throw InvalidArgument("bucket mix fractions must sum to 1");
  CellCounts counts{};
  std::array<std::pair<double, int>, 9> rem{};
  std::size_t assigned = 0;
  for (int c = 0; c < 9; ++c) {
    const double exact = mix[c / 3][c % 3] * static_cast<double>(n);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    counts[c / 3][c % 3] = base;
    assigned += base;
    rem[c] = {exact - static_cast<double>(base), c};
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[rem[i % 9].second / 3][rem[i % 9].second % 3];
  return counts;
}

inline CellMix mix_from_counts(const CellCounts& counts) {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (auto c : row) n += c;
  if (n == 0) throw InvalidArgument("mix_from_counts: all counts zero");
  CellMix mix{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mix[i][j] = static_cast<double>(counts[i][j]) / static_cast<double>(n);
  return mix;
}

namespace detail {

inline std::pair<double, double> bucket_range(Bucket b, const BucketThresholds& th) {
  switch (b) {
    case Bucket::Low: return {0.0, th.low_hi};
    case Bucket::Mid: return {th.low_hi, th.high_lo};
    case Bucket::High: return {th.high_lo, 1.0};
  }
  return {0.0, 1.0};
}

// Uniform over (lo, hi]; Low includes 0 only in the limit.
inline double sample_in_bucket(Bucket b, const BucketThresholds& th, Rng& rng) {
  auto [lo, hi] = bucket_range(b, th);
  return hi - (hi - lo) * uniform01(rng);
}

inline std::string instance_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "inst-%05zu", i);
  return buf;
}

}  // namespace detail

inline SynthOutput synth_trace(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.buckets.check();
  const auto counts = apportion(cfg.bucket_mix, cfg.n);
  const double regime_sum = cfg.diagonal_regime[0] + cfg.diagonal_regime[1] + cfg.diagonal_regime[2];
  if (std::fabs(regime_sum - 1.0) > 1e-9) throw InvalidArgument("diagonal regime fractions must sum to 1");
  if (cfg.with_embeddings && (cfg.dim < 2 || cfg.layers == 0 || cfg.signal_layer >= cfg.layers)) {
    throw InvalidArgument("embedding config needs dim >= 2 and signal_layer < layers");
  }

  Rng rng(seed);
  std::vector<int> cells;
  cells.reserve(cfg.n);
  for (int c = 0; c < 9; ++c) cells.insert(cells.end(), counts[c / 3][c % 3], c);
  shuffle(cells, rng);

  SynthOutput out;
  out.traces.provenance = {{"generator", "synth_trace"}, {"seed", seed}};
  out.traces.records.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const auto row = static_cast<Bucket>(cells[i] / 3);
    const auto col = static_cast<Bucket>(cells[i] % 3);
    TraceRecord r;
    r.instance_id = detail::instance_name(i);
    r.seq_index = i;
    r.task_name = cfg.task_name;
    r.model_id = cfg.model_id;
    if (row != col) {
      r.s_no_tool = detail::sample_in_bucket(row, cfg.buckets, rng);
      r.s_always_tool = detail::sample_in_bucket(col, cfg.buckets, rng);
    } else {
      const double u = uniform01(rng);
      const double a = detail::sample_in_bucket(row, cfg.buckets, rng);
      if (u < cfg.diagonal_regime[0] || u >= cfg.diagonal_regime[0] + cfg.diagonal_regime[1]) {
        double b;
        do {
          b = detail::sample_in_bucket(row, cfg.buckets, rng);
        } while (b == a);
        const bool positive = u < cfg.diagonal_regime[0];
        r.s_no_tool = positive ? std::min(a, b) : std::max(a, b);
        r.s_always_tool = positive ? std::max(a, b) : std::min(a, b);
      } else {
        r.s_no_tool = r.s_always_tool = a;
      }
    }
    const bool helpful = true_utility(r) == UtilityLabel::positive;
    r.self_called = helpful != bernoulli(rng, cfg.self_flip);
    r.self_call_count = r.self_called ? (bernoulli(rng, cfg.repeat_call_rate) ? 2u : 1u) : 0u;
    const bool needed = true_need(r) == NeedLabel::needed;
    for (auto v : {PromptVariant::v1, PromptVariant::v2, PromptVariant::v3}) {
      if (bernoulli(rng, cfg.perceived_missing)) {
        r.perceived_need[v] = std::nullopt;
      } else {
        r.perceived_need[v] = needed != bernoulli(rng, cfg.perceived_flip);
      }
    }
    if (cfg.with_embeddings) {
      for (auto c : {EmbeddingCondition::no_tool_input, EmbeddingCondition::with_tool_desc}) {
        r.embedding_refs[c] = EmbeddingRef{embedding_file_name(c, 0), i, 0};
      }
    }
    out.traces.records.push_back(std::move(r));
  }

  if (!cfg.with_embeddings) return out;

  // Embedded classes: need along the all-ones direction, helpfulness along the
  // alternating-sign direction, both unit length.
  std::vector<bool> need_class(cfg.n), util_class(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const auto& r = out.traces.records[i];
    need_class[i] = (true_need(r) == NeedLabel::needed) != bernoulli(rng, cfg.label_noise);
    util_class[i] = (true_utility(r) == UtilityLabel::positive) != bernoulli(rng, cfg.label_noise);
  }
  const double half = cfg.margin / 2.0;
  const double unit = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (auto c : {EmbeddingCondition::no_tool_input, EmbeddingCondition::with_tool_desc}) {
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      EmbeddingMatrix m{cfg.n, cfg.dim, static_cast<int>(l), cfg.model_id, std::vector<float>(cfg.n * cfg.dim)};
      for (std::size_t i = 0; i < cfg.n; ++i) {
        for (std::size_t d = 0; d < cfg.dim; ++d) {
          double v = standard_normal(rng);
          if (l == cfg.signal_layer) {
            v += (need_class[i] ? half : -half) * unit;
            v += (util_class[i] ? half : -half) * (d % 2 ? -unit : unit);
          }
          m.values[i * cfg.dim + d] = static_cast<float>(v);
        }
      }
      out.embeddings.emplace(LayerKey{c, static_cast<int>(l)}, std::move(m));
    }
  }
  return out;
}

// Bucket-transition cell counts (rows no-tool bucket, columns always-tool
// bucket) with 177 of 348 need-region instances gaining from the tool.
inline constexpr CellCounts kFigure3Counts = {{{60, 40, 30}, {2, 109, 107}, {4, 48, 152}}};

inline SynthConfig figure3_config() {
  SynthConfig c;
  c.n = 552;
  c.bucket_mix = mix_from_counts(kFigure3Counts);
  c.with_embeddings = false;
  return c;
}

// Two well-separated classes per estimator target on 64 dimensions.
inline SynthConfig separable_config() {
  SynthConfig c;
  c.n = 500;
  c.dim = 64;
  return c;
}

// Figure-3 score mix, separable embeddings, and self-decisions that disagree
// with the true helpfulness 40% of the time.
inline SynthConfig noisy_self_config() {
  SynthConfig c = figure3_config();
  c.with_embeddings = true;
  c.self_flip = 0.4;
  return c;
}

// Writes trace.jsonl plus every embedding file into `dir`.
inline void write_synth_output(const SynthOutput& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_trace_set(s.traces, dir / "trace.jsonl");
  for (const auto& [key, m] : s.embeddings) write_embeddings(m, dir / embedding_file_name(key.condition, key.layer));
}

struct AggregateFixtureSpec {
  std::size_t n = 500;
  double mean_no_tool = 0.61;
  double mean_always_tool = 0.78;
  std::size_t n_positive = 300;  // instances with strictly positive gain
  double mean_best = 0.83;       // mean of per-instance max(s_no_tool, s_always_tool)
  std::size_t n_self_called = 152;
  std::string model_id = "fixture-model";
  std::string task_name = "fixture";
};

// Positive-gain instances share one base level and one mean gain, the rest
// another; zero-sum paired jitter keeps every aggregate exact.
inline TraceSet aggregate_fixture(const AggregateFixtureSpec& spec, std::uint64_t seed) {
  const auto n = spec.n, np = spec.n_positive;
  if (n == 0 || np > n || spec.n_self_called > n) throw InvalidArgument("aggregate_fixture: bad counts");
  const auto nq = n - np;
  const double dn = static_cast<double>(n);
  const double sum_nt = dn * spec.mean_no_tool, sum_at = dn * spec.mean_always_tool, sum_best = dn * spec.mean_best;
  const double gain_p = np ? (sum_best - sum_nt) / static_cast<double>(np) : 0.0;
  const double gain_q = nq ? (sum_at - sum_best) / static_cast<double>(nq) : 0.0;
  if ((np && !(gain_p > 0.0)) || (nq && gain_q > 0.0) || (!np && std::fabs(sum_best - sum_nt) > 1e-9) ||
      (!nq && std::fabs(sum_at - sum_best) > 1e-9)) {
    throw InvalidArgument("aggregate_fixture: means are inconsistent with the positive-gain count");
  }

  // Pick the positive-group base level that leaves the most room inside [0,1].
  double best_a = -1.0, best_slack = -1.0;
  for (int step = 0; step <= 1000; ++step) {
    const double a = (1.0 - gain_p) * step / 1000.0;
    const double b = nq ? (sum_nt - static_cast<double>(np) * a) / static_cast<double>(nq) : 0.5;
    double slack = std::min({b, 1.0 - b, b + gain_q});
    if (np) slack = std::min({slack, a, 1.0 - a - gain_p});
    if (slack > best_slack) best_slack = slack, best_a = a;
  }
  if (best_slack < 0.0) throw InvalidArgument("aggregate_fixture: infeasible within [0,1]");
  const double a = best_a;
  const double b = nq ? (sum_nt - static_cast<double>(np) * a) / static_cast<double>(nq) : 0.5;

  Rng rng(seed);
  struct Scores {
    double nt, at;
  };
  std::vector<Scores> scores;
  auto emit_group = [&](std::size_t count, double base, double gain) {
    const double level_amp = 0.45 * best_slack;
    const double gain_amp = std::min(0.45 * best_slack, 0.5 * std::fabs(gain));
    for (std::size_t i = 0; i + 1 < count; i += 2) {
      const double jl = level_amp * uniform01(rng);
      const double jg = gain_amp * uniform01(rng);
      scores.push_back({base + jl, base + gain + jl + jg});
      scores.push_back({base - jl, base + gain - jl - jg});
    }
    if (count % 2) scores.push_back({base, base + gain});
  };
  emit_group(np, a, gain_p);
  emit_group(nq, b, gain_q);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<std::size_t> callers(n);
  std::iota(callers.begin(), callers.end(), std::size_t{0});
  shuffle(callers, rng);
  std::vector<bool> called(n, false);
  for (std::size_t i = 0; i < spec.n_self_called; ++i) called[callers[i]] = true;

  TraceSet ts;
  ts.provenance = {{"generator", "aggregate_fixture"}, {"seed", seed}};
  for (std::size_t i = 0; i < n; ++i) {
    TraceRecord r;
    r.instance_id = detail::instance_name(i);
    r.seq_index = i;
    r.task_name = spec.task_name;
    r.model_id = spec.model_id;
    r.s_no_tool = std::clamp(scores[order[i]].nt, 0.0, 1.0);
    r.s_always_tool = std::clamp(scores[order[i]].at, 0.0, 1.0);
    r.self_called = called[i];
    r.self_call_count = called[i] ? 1 : 0;
    ts.records.push_back(std::move(r));
  }
  return ts;
}

}  // namespace toolcall
