#pragma once

// Stratified k-fold plans, out-of-fold evaluation, grid search and per-layer
// representation search.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toolcall/alignment.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/mlp.hpp"
#include "toolcall/random.hpp"
#include "toolcall/standardizer.hpp"
#include "toolcall/table.hpp"

namespace toolcall {

inline constexpr std::size_t kDefaultFolds = 5;
inline constexpr std::uint64_t kDefaultSeed = 42;

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // per instance

  std::vector<std::size_t> test_indices(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == f) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_indices(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != f) out.push_back(i);
    return out;
  }
};

// Each class is shuffled and dealt round-robin, continuing the deal position
// from one class to the next so fold sizes stay within one of each other.
inline FoldPlan stratified_folds(const Vector& y, std::size_t k = kDefaultFolds, std::uint64_t seed = kDefaultSeed) {
  if (k < 2) throw InvalidArgument("stratified_folds: k must be >= 2");
  std::vector<std::size_t> by_class[2];
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw InvalidArgument("stratified_folds: labels must be 0 or 1");
    by_class[y(i) == 1.0].push_back(static_cast<std::size_t>(i));
  }
  for (const auto& c : by_class) {
    if (c.size() < k) throw InvalidArgument("stratified_folds: each class needs at least k instances");
  }
  Rng rng(seed);
  FoldPlan plan{k, std::vector<std::size_t>(static_cast<std::size_t>(y.size()))};
  std::size_t deal = 0;
  for (auto& c : by_class) {
    shuffle(c, rng);
    for (auto i : c) plan.fold_of[i] = deal++ % k;
  }
  return plan;
}

struct FoldMetrics {
  double accuracy = 0.0;
  std::optional<double> balanced_accuracy;
  std::string spec_label;
};

struct CvResult {
  std::vector<double> oof_proba;
  std::vector<int> oof_label;
  ConfusionMatrix2 confusion;  // rows true, columns predicted
  std::vector<FoldMetrics> folds;

  double accuracy() const { return confusion.accuracy(); }
  std::optional<double> balanced_accuracy() const { return confusion.balanced_accuracy(); }
};

namespace detail {

inline ConfusionMatrix2 confusion_of(const Vector& y, const std::vector<int>& pred, const std::vector<std::size_t>& idx) {
  ConfusionMatrix2 m;
  for (auto i : idx) m.add(y(static_cast<Eigen::Index>(i)) == 1.0, pred[i] == 1);
  return m;
}

// Fits the standardizer on the train rows, trains, and fills predictions for
// the test rows.
inline void fit_and_predict_fold(const Matrix& x, const Vector& y, const std::vector<std::size_t>& train,
                                 const std::vector<std::size_t>& test, const MlpSpec& spec, CvResult& out) {
  const Matrix x_train = take_rows(x, train);
  const auto st = fit_standardizer(x_train);
  const auto model = train_mlp(st.apply(x_train), take(y, train), spec);
  const Vector p = mlp_proba(model, st.apply(take_rows(x, test)));
  for (std::size_t j = 0; j < test.size(); ++j) {
    out.oof_proba[test[j]] = p(static_cast<Eigen::Index>(j));
    out.oof_label[test[j]] = predict_label(p(static_cast<Eigen::Index>(j)));
  }
}

inline CvResult empty_result(std::size_t n) {
  CvResult r;
  r.oof_proba.assign(n, 0.0);
  r.oof_label.assign(n, 0);
  return r;
}

inline void finish(const Vector& y, CvResult& r) {
  std::vector<std::size_t> all(r.oof_label.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  r.confusion = confusion_of(y, r.oof_label, all);
}

}  // namespace detail

// Out-of-fold predictions for one fixed spec.
inline CvResult cross_val_oof(const Matrix& x, const Vector& y, const MlpSpec& spec, std::size_t k = kDefaultFolds,
                              std::uint64_t seed = kDefaultSeed) {
  if (x.rows() != y.size()) throw InvalidArgument("cross_val_oof: row/label count mismatch");
  const auto plan = stratified_folds(y, k, seed);
  auto r = detail::empty_result(static_cast<std::size_t>(x.rows()));
  for (std::size_t f = 0; f < k; ++f) {
    const auto test = plan.test_indices(f);
    detail::fit_and_predict_fold(x, y, plan.train_indices(f), test, spec, r);
    const auto m = detail::confusion_of(y, r.oof_label, test);
    r.folds.push_back({m.accuracy(), m.balanced_accuracy(), spec.label()});
  }
  detail::finish(y, r);
  return r;
}

struct GridSearchResult {
  std::size_t best_index = 0;
  MlpSpec best;
  std::vector<double> mean_accuracy;  // per grid entry
};

// Mean inner k-fold validation accuracy per spec; ties keep the earlier entry.
// When a class has fewer than 2 instances the first spec is returned unscored.
inline GridSearchResult grid_search(const Matrix& x, const Vector& y, const std::vector<MlpSpec>& grid,
                                    std::uint64_t seed = kDefaultSeed, std::size_t k = kDefaultFolds) {
  if (grid.empty()) throw InvalidArgument("grid_search: empty grid");
  GridSearchResult out;
  out.best = grid.front();
  if (grid.size() == 1) return out;
  std::size_t minority = 0;
  {
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) pos += (y(i) == 1.0);
    minority = std::min<std::size_t>(pos, static_cast<std::size_t>(y.size()) - pos);
  }
  const std::size_t inner_k = std::min(k, minority);
  if (inner_k < 2) return out;
  double best = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto r = cross_val_oof(x, y, grid[g], inner_k, seed);
    double mean = 0.0;
    for (const auto& f : r.folds) mean += f.accuracy;
    mean /= static_cast<double>(r.folds.size());
    out.mean_accuracy.push_back(mean);
    if (mean > best) {
      best = mean;
      out.best_index = g;
      out.best = grid[g];
    }
  }
  return out;
}

// Outer k-fold OOF evaluation with the grid search rerun on every outer
// training split; each fold records the spec it used.
inline CvResult nested_cross_val_oof(const Matrix& x, const Vector& y, const std::vector<MlpSpec>& grid,
                                     std::size_t k = kDefaultFolds, std::uint64_t seed = kDefaultSeed) {
  if (x.rows() != y.size()) throw InvalidArgument("nested_cross_val_oof: row/label count mismatch");
  const auto plan = stratified_folds(y, k, seed);
  auto r = detail::empty_result(static_cast<std::size_t>(x.rows()));
  for (std::size_t f = 0; f < k; ++f) {
    const auto train = plan.train_indices(f);
    const auto test = plan.test_indices(f);
    const auto gs = grid_search(detail::take_rows(x, train), detail::take(y, train), grid, seed, k);
    detail::fit_and_predict_fold(x, y, train, test, gs.best, r);
    const auto m = detail::confusion_of(y, r.oof_label, test);
    r.folds.push_back({m.accuracy(), m.balanced_accuracy(), gs.best.label()});
  }
  detail::finish(y, r);
  return r;
}

struct LayerScore {
  int layer = 0;
  double best_accuracy = 0.0;
  std::size_t best_spec_index = 0;
  std::vector<double> spec_accuracy;
};

struct LayerSearchResult {
  std::vector<LayerScore> layers;
  std::size_t best_position = 0;  // index into `layers`

  int best_layer() const { return layers.at(best_position).layer; }
};

// Per layer, the best OOF accuracy over the grid; the winning layer has the
// highest such accuracy, ties going to the lowest layer index.
inline LayerSearchResult layer_search(const std::vector<std::pair<int, Matrix>>& embeddings, const Vector& y,
                                      const std::vector<MlpSpec>& grid, std::size_t k = kDefaultFolds,
                                      std::uint64_t seed = kDefaultSeed) {
  if (embeddings.empty()) throw InvalidArgument("layer_search: no layers");
  if (grid.empty()) throw InvalidArgument("layer_search: empty grid");
  for (const auto& [layer, x] : embeddings) {
    if (x.rows() != y.size()) {
      throw InvalidArgument("layer_search: layer " + std::to_string(layer) + " row count does not match labels");
    }
  }
  LayerSearchResult out;
  for (const auto& [layer, x] : embeddings) {
    LayerScore s;
    s.layer = layer;
    s.best_accuracy = -1.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double acc = cross_val_oof(x, y, grid[g], k, seed).accuracy();
      s.spec_accuracy.push_back(acc);
      if (acc > s.best_accuracy) {
        s.best_accuracy = acc;
        s.best_spec_index = g;
      }
    }
    out.layers.push_back(std::move(s));
  }
  for (std::size_t i = 1; i < out.layers.size(); ++i) {
    const auto& cur = out.layers[i];
    const auto& best = out.layers[out.best_position];
    if (cur.best_accuracy > best.best_accuracy ||
        (cur.best_accuracy == best.best_accuracy && cur.layer < best.layer)) {
      out.best_position = i;
    }
  }
  return out;
}

inline Table to_table(const LayerSearchResult& r, const std::vector<MlpSpec>& grid) {
  Table t{{"layer", "best_oof_accuracy", "best_spec", "selected"}, {}};
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& l = r.layers[i];
    t.add({static_cast<std::int64_t>(l.layer), l.best_accuracy, grid.at(l.best_spec_index).label(),
           static_cast<std::int64_t>(i == r.best_position)});
  }
  return t;
}

inline Table fold_table(const CvResult& r) {
  Table t{{"fold", "accuracy", "balanced_accuracy", "spec"}, {}};
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    t.add({static_cast<std::int64_t>(f), r.folds[f].accuracy, real_cell(r.folds[f].balanced_accuracy),
           r.folds[f].spec_label});
  }
  return t;
}

}  // namespace toolcall
