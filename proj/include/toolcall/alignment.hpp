#pragma once

// Descriptive-vs-normative misalignment: 2x2 confusion/consistency matrices
// and three-set region counts over true positive utility, perceived need and
// perceived utility.

#include <array>
#include <cstddef>
#include <optional>
#include <string>

#include "toolcall/errors.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/table.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

// cells[row][col]; rows are the reference label, columns the compared label.
struct ConfusionMatrix2 {
  std::array<std::array<std::size_t, 2>, 2> cells{};
  std::size_t excluded = 0;

  std::size_t total() const { return cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1]; }
  std::size_t row_total(int r) const { return cells[r][0] + cells[r][1]; }
  std::size_t col_total(int c) const { return cells[0][c] + cells[1][c]; }

  double accuracy() const {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(cells[0][0] + cells[1][1]) / static_cast<double>(n);
  }

  // Mean per-row recall over rows with at least one record; absent when
  // only one class is present.
  std::optional<double> balanced_accuracy() const {
    double sum = 0.0;
    int rows = 0;
    for (int r = 0; r < 2; ++r) {
      if (row_total(r) == 0) continue;
      sum += static_cast<double>(cells[r][r]) / static_cast<double>(row_total(r));
      ++rows;
    }
    if (rows < 2) return std::nullopt;
    return sum / rows;
  }

  // P(column = 1 | row = r).
  std::optional<double> row_positive_rate(int r) const {
    if (row_total(r) == 0) return std::nullopt;
    return static_cast<double>(cells[r][1]) / static_cast<double>(row_total(r));
  }

  void add(bool row, bool col) { ++cells[row ? 1 : 0][col ? 1 : 0]; }
};

// Rows: true need N*; columns: perceived need for `variant`.
inline ConfusionMatrix2 need_confusion(const TraceSet& ts, PromptVariant variant,
                                       double threshold = kDefaultNeedThreshold) {
  ConfusionMatrix2 m;
  for (const auto& r : ts.records) {
    auto p = r.perceived(variant);
    if (!p) {
      ++m.excluded;
      continue;
    }
    m.add(true_need(r, threshold) == NeedLabel::needed, *p);
  }
  if (m.total() == 0) {
    throw InvalidArgument("need_confusion: no record has a parsed answer for variant " + to_string(variant));
  }
  return m;
}

// Rows: 1{U* = +1}; columns: the Self-decision call.
inline ConfusionMatrix2 utility_confusion(const TraceSet& ts, double eps = kDefaultEps) {
  ConfusionMatrix2 m;
  for (const auto& r : ts.records) m.add(true_utility(r, eps) == UtilityLabel::positive, r.self_called);
  return m;
}

// Rows: perceived need for `variant`; columns: the Self-decision call.
// row_positive_rate(r) is the rate at which calls follow perceived need r.
inline ConfusionMatrix2 consistency_matrix(const TraceSet& ts, PromptVariant variant) {
  ConfusionMatrix2 m;
  for (const auto& r : ts.records) {
    auto p = r.perceived(variant);
    if (!p) {
      ++m.excluded;
      continue;
    }
    m.add(*p, r.self_called);
  }
  return m;
}

// Region index bits: 1 = A (true positive utility), 2 = B (perceived need),
// 4 = C (perceived utility). regions[0] counts records outside all three.
struct VennCounts {
  std::array<std::size_t, 8> regions{};
  std::size_t excluded = 0;

  static constexpr unsigned kA = 1, kB = 2, kC = 4;

  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : regions) s += c;
    return s;
  }
  // |X ∩ Y ∩ ...| for the sets in `mask`.
  std::size_t intersection(unsigned mask) const {
    std::size_t s = 0;
    for (unsigned i = 0; i < 8; ++i)
      if ((i & mask) == mask) s += regions[i];
    return s;
  }
  // |X \ Y|
  std::size_t difference(unsigned x, unsigned y) const {
    std::size_t s = 0;
    for (unsigned i = 0; i < 8; ++i)
      if ((i & x) && !(i & y)) s += regions[i];
    return s;
  }
  std::size_t c_minus_b() const { return difference(kC, kB); }
  std::size_t b_minus_a() const { return difference(kB, kA); }
  std::size_t c_minus_a() const { return difference(kC, kA); }
};

inline VennCounts venn_counts(const TraceSet& ts, PromptVariant variant, double eps = kDefaultEps) {
  VennCounts v;
  for (const auto& r : ts.records) {
    auto p = r.perceived(variant);
    if (!p) {
      ++v.excluded;
      continue;
    }
    unsigned idx = 0;
    if (true_utility(r, eps) == UtilityLabel::positive) idx |= VennCounts::kA;
    if (*p) idx |= VennCounts::kB;
    if (r.self_called) idx |= VennCounts::kC;
    ++v.regions[idx];
  }
  if (v.total() == 0) throw InvalidArgument("venn_counts: no record has all three labels defined");
  return v;
}

inline Table to_table(const ConfusionMatrix2& m, const std::string& row_name, const std::string& col_name) {
  Table t{{row_name + "\\" + col_name, "0", "1", "row_total", "row_positive_rate"}, {}};
  for (int r = 0; r < 2; ++r) {
    t.add({std::to_string(r), count_cell(m.cells[r][0]), count_cell(m.cells[r][1]), count_cell(m.row_total(r)),
           real_cell(m.row_positive_rate(r))});
  }
  return t;
}

inline Table summary_table(const ConfusionMatrix2& m) {
  Table t{{"included", "excluded", "accuracy", "balanced_accuracy"}, {}};
  t.add({count_cell(m.total()), count_cell(m.excluded), m.accuracy(), real_cell(m.balanced_accuracy())});
  return t;
}

inline Table to_table(const VennCounts& v) {
  static const char* names[8] = {"none", "A", "B", "A&B", "C", "A&C", "B&C", "A&B&C"};
  Table t{{"region", "count"}, {}};
  for (unsigned i = 0; i < 8; ++i) t.add({std::string(names[i]), count_cell(v.regions[i])});
  t.add({std::string("C\\B"), count_cell(v.c_minus_b())});
  t.add({std::string("B\\A"), count_cell(v.b_minus_a())});
  t.add({std::string("C\\A"), count_cell(v.c_minus_a())});
  t.add({std::string("excluded"), count_cell(v.excluded)});
  return t;
}

}  // namespace toolcall
