#pragma once

// Normative labels computed from the two reference-policy scores.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "toolcall/errors.hpp"
#include "toolcall/table.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

inline constexpr double kDefaultLowHi = 0.1;
inline constexpr double kDefaultHighLo = 0.9;
inline constexpr double kDefaultNeedThreshold = 0.9;
inline constexpr double kDefaultEps = 1e-9;

enum class Bucket { Low = 0, Mid = 1, High = 2 };

inline std::string to_string(Bucket b) {
  switch (b) {
    case Bucket::Low: return "Low";
    case Bucket::Mid: return "Mid";
    case Bucket::High: return "High";
  }
  return "?";
}

// Low = [0, low_hi], Mid = (low_hi, high_lo], High = (high_lo, 1].
struct BucketThresholds {
  double low_hi = kDefaultLowHi;
  double high_lo = kDefaultHighLo;

  void check() const {
    if (!(0.0 <= low_hi && low_hi < high_lo && high_lo <= 1.0)) {
      throw InvalidArgument("bucket thresholds must satisfy 0 <= low_hi < high_lo <= 1");
    }
  }
};

enum class NeedLabel : int { not_needed = 0, needed = 1 };
enum class UtilityLabel : int { negative = -1, neutral = 0, positive = 1 };

struct GainValue {
  double delta = 0.0;
};

namespace detail {
inline void check_score(double s, const char* what) {
  if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument(std::string(what) + " outside [0,1]");
}
}  // namespace detail

inline Bucket bucket(double score, const BucketThresholds& th = {}) {
  detail::check_score(score, "score");
  if (score <= th.low_hi) return Bucket::Low;
  if (score <= th.high_lo) return Bucket::Mid;
  return Bucket::High;
}

inline NeedLabel true_need(double s_no_tool, double threshold = kDefaultNeedThreshold) {
  detail::check_score(s_no_tool, "s_no_tool");
  return s_no_tool <= threshold ? NeedLabel::needed : NeedLabel::not_needed;
}

inline UtilityLabel true_utility(double s_no_tool, double s_always_tool, double eps = kDefaultEps) {
  detail::check_score(s_no_tool, "s_no_tool");
  detail::check_score(s_always_tool, "s_always_tool");
  if (eps < 0.0) throw InvalidArgument("eps must be non-negative");
  if (s_always_tool - s_no_tool > eps) return UtilityLabel::positive;
  if (s_no_tool - s_always_tool > eps) return UtilityLabel::negative;
  return UtilityLabel::neutral;
}

inline GainValue marginal_gain(double s_no_tool, double s_always_tool) {
  detail::check_score(s_no_tool, "s_no_tool");
  detail::check_score(s_always_tool, "s_always_tool");
  return {s_always_tool - s_no_tool};
}

inline NeedLabel true_need(const TraceRecord& r, double threshold = kDefaultNeedThreshold) {
  return true_need(r.s_no_tool, threshold);
}
inline UtilityLabel true_utility(const TraceRecord& r, double eps = kDefaultEps) {
  return true_utility(r.s_no_tool, r.s_always_tool, eps);
}
inline GainValue marginal_gain(const TraceRecord& r) { return marginal_gain(r.s_no_tool, r.s_always_tool); }

// Rows index the No-Tool bucket, columns the Always-Tool bucket.
struct BucketMatrix {
  std::array<std::array<std::size_t, 3>, 3> counts{};

  std::size_t at(Bucket no_tool, Bucket always_tool) const {
    return counts[static_cast<int>(no_tool)][static_cast<int>(always_tool)];
  }

  std::size_t total() const {
    std::size_t s = 0;
    for (const auto& row : counts)
      for (auto c : row) s += c;
    return s;
  }
  std::size_t positive() const { return counts[0][1] + counts[0][2] + counts[1][2]; }
  std::size_t negative() const { return counts[1][0] + counts[2][0] + counts[2][1]; }
  std::size_t neutral() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

  // Need region: No-Tool bucket Low or Mid.
  std::size_t need_region_total() const {
    std::size_t s = 0;
    for (int i = 0; i < 2; ++i)
      for (auto c : counts[i]) s += c;
    return s;
  }
  std::size_t need_region_positive() const { return counts[0][1] + counts[0][2] + counts[1][2]; }
  std::size_t need_region_negative() const { return counts[1][0]; }
  double need_region_positive_rate() const {
    const auto t = need_region_total();
    return t == 0 ? 0.0 : static_cast<double>(need_region_positive()) / static_cast<double>(t);
  }
};

inline BucketMatrix bucket_transition_matrix(const TraceSet& ts, const BucketThresholds& th = {}) {
  th.check();
  if (ts.empty()) throw InvalidArgument("bucket_transition_matrix: empty trace");
  BucketMatrix m;
  for (const auto& r : ts.records) {
    ++m.counts[static_cast<int>(bucket(r.s_no_tool, th))][static_cast<int>(bucket(r.s_always_tool, th))];
  }
  return m;
}

inline Table to_table(const BucketMatrix& m) {
  Table t{{"no_tool\\always_tool", "Low", "Mid", "High"}, {}};
  for (int i = 0; i < 3; ++i) {
    t.add({to_string(static_cast<Bucket>(i)), count_cell(m.counts[i][0]), count_cell(m.counts[i][1]),
           count_cell(m.counts[i][2])});
  }
  return t;
}

inline Table region_table(const BucketMatrix& m) {
  Table t{{"total", "positive", "negative", "neutral", "need_region_total", "need_region_positive",
           "need_region_positive_rate"},
          {}};
  t.add({count_cell(m.total()), count_cell(m.positive()), count_cell(m.negative()), count_cell(m.neutral()),
         count_cell(m.need_region_total()), count_cell(m.need_region_positive()), m.need_region_positive_rate()});
  return t;
}

struct LabelOptions {
  BucketThresholds buckets;
  double need_threshold = kDefaultNeedThreshold;
  double eps = kDefaultEps;
};

inline Table label_table(const TraceSet& ts, const LabelOptions& opt = {}) {
  Table t{{"instance_id", "seq_index", "s_no_tool", "s_always_tool", "bucket_no_tool", "bucket_always_tool",
           "true_need", "true_utility", "marginal_gain"},
          {}};
  for (const auto& r : ts.records) {
    t.add({r.instance_id, static_cast<std::int64_t>(r.seq_index), r.s_no_tool, r.s_always_tool,
           to_string(bucket(r.s_no_tool, opt.buckets)), to_string(bucket(r.s_always_tool, opt.buckets)),
           static_cast<std::int64_t>(true_need(r, opt.need_threshold)),
           static_cast<std::int64_t>(true_utility(r, opt.eps)), marginal_gain(r).delta});
  }
  return t;
}

}  // namespace toolcall
