#pragma once

// Latent need/utility estimators and their deployable bundle.
//
// Bundle file (TEB1), integers little-endian:
//   bytes 0..3   ASCII "TEB1"
//   bytes 4..7   uint32 header length H
//   H bytes      JSON header: format_version, kind, layer, input_dim, spec,
//                training, metrics, provenance, tensors [{name, rows, cols}]
//   payload      each listed tensor as rows*cols binary64 values, row-major,
//                in header order

#include <array>
#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toolcall/cross_validation.hpp"
#include "toolcall/embeddings.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/mlp.hpp"
#include "toolcall/standardizer.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

inline constexpr int kBundleVersion = 1;

enum class EstimatorKind { LNE, LUE_x, LUE_xd };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::LNE: return "lne";
    case EstimatorKind::LUE_x: return "lue-x";
    case EstimatorKind::LUE_xd: return "lue-xd";
  }
  return "?";
}

inline std::optional<EstimatorKind> parse_estimator_kind(std::string_view s) {
  if (s == "lne") return EstimatorKind::LNE;
  if (s == "lue-x") return EstimatorKind::LUE_x;
  if (s == "lue-xd") return EstimatorKind::LUE_xd;
  return std::nullopt;
}

inline EmbeddingCondition condition_for(EstimatorKind k) {
  return k == EstimatorKind::LUE_xd ? EmbeddingCondition::with_tool_desc : EmbeddingCondition::no_tool_input;
}

// LNE targets N*; both utility estimators target 1{U* = +1}.
inline Vector estimator_labels(const TraceSet& ts, EstimatorKind k, double need_threshold = kDefaultNeedThreshold,
                               double eps = kDefaultEps) {
  Vector y(static_cast<Eigen::Index>(ts.size()));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& r = ts.records[i];
    const bool positive = k == EstimatorKind::LNE ? true_need(r, need_threshold) == NeedLabel::needed
                                                  : true_utility(r, eps) == UtilityLabel::positive;
    y(static_cast<Eigen::Index>(i)) = positive ? 1.0 : 0.0;
  }
  return y;
}

struct CvSummary {
  double accuracy = 0.0;
  std::optional<double> balanced_accuracy;
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::vector<std::string> fold_specs;

  friend bool operator==(const CvSummary&, const CvSummary&) = default;
};

inline CvSummary summarize(const CvResult& r) {
  CvSummary s{r.accuracy(), r.balanced_accuracy(), r.confusion.cells, {}};
  for (const auto& f : r.folds) s.fold_specs.push_back(f.spec_label);
  return s;
}

struct EstimatorBundle {
  EstimatorKind kind = EstimatorKind::LNE;
  int layer = 0;
  Standardizer standardizer;
  MlpModel model;
  CvSummary cv;
  nlohmann::json provenance = nlohmann::json::object();
  // Raw feature rows with labels, kept to re-check the final model on load.
  Matrix validation_x;
  Vector validation_y;
  double validation_accuracy = 0.0;

  std::size_t input_dim() const { return standardizer.dim(); }

  double predict_proba(std::span<const double> x) const { return toolcall::predict_proba(model, standardizer, x); }

  Vector predict_proba(const Matrix& x) const { return mlp_proba(model, standardizer.apply(x)); }
};

inline double bundle_accuracy(const EstimatorBundle& b, const Matrix& x, const Vector& y) {
  if (x.rows() == 0) return 0.0;
  const Vector p = b.predict_proba(x);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) hits += (predict_label(p(i)) == static_cast<int>(y(i)));
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

namespace detail {

inline constexpr std::array<char, 4> kBundleMagic{'T', 'E', 'B', '1'};

struct NamedTensor {
  std::string name;
  Matrix value;
};

inline nlohmann::json spec_to_json(const MlpSpec& s) {
  return {{"hidden_layers", s.hidden_layers},
          {"learning_rate", s.learning_rate},
          {"max_epochs", s.max_epochs},
          {"patience", s.patience},
          {"seed", s.seed},
          {"l2_penalty", s.l2_penalty},
          {"batch_size", s.batch_size},
          {"validation_fraction", s.validation_fraction},
          {"improvement_tolerance", s.improvement_tolerance}};
}

inline MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.hidden_layers = j.at("hidden_layers").get<std::vector<std::size_t>>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.max_epochs = j.at("max_epochs").get<std::size_t>();
  s.patience = j.at("patience").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.l2_penalty = j.at("l2_penalty").get<double>();
  s.batch_size = j.at("batch_size").get<std::size_t>();
  s.validation_fraction = j.at("validation_fraction").get<double>();
  s.improvement_tolerance = j.at("improvement_tolerance").get<double>();
  return s;
}

inline Matrix row_matrix(const Vector& v) { return v.transpose(); }

}  // namespace detail

inline std::string encode_bundle(const EstimatorBundle& b) {
  std::vector<detail::NamedTensor> tensors;
  tensors.push_back({"standardizer.mean", detail::row_matrix(b.standardizer.mean)});
  tensors.push_back({"standardizer.scale", detail::row_matrix(b.standardizer.scale)});
  for (std::size_t i = 0; i < b.model.layers.size(); ++i) {
    tensors.push_back({"layer" + std::to_string(i) + ".weights", b.model.layers[i].weights});
    tensors.push_back({"layer" + std::to_string(i) + ".bias", detail::row_matrix(b.model.layers[i].bias)});
  }
  tensors.push_back({"validation.x", b.validation_x});
  tensors.push_back({"validation.y", detail::row_matrix(b.validation_y)});

  nlohmann::json tensor_list = nlohmann::json::array();
  for (const auto& t : tensors) tensor_list.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  nlohmann::json metrics = {{"accuracy", b.cv.accuracy},
                            {"balanced_accuracy", b.cv.balanced_accuracy ? nlohmann::json(*b.cv.balanced_accuracy)
                                                                         : nlohmann::json(nullptr)},
                            {"confusion", b.cv.confusion},
                            {"fold_specs", b.cv.fold_specs},
                            {"validation_accuracy", b.validation_accuracy}};
  nlohmann::json header = {{"format_version", kBundleVersion},
                           {"kind", to_string(b.kind)},
                           {"layer", b.layer},
                           {"input_dim", b.input_dim()},
                           {"spec", detail::spec_to_json(b.model.spec)},
                           {"training", {{"epochs_run", b.model.epochs_run}, {"stopped_early", b.model.stopped_early}}},
                           {"metrics", metrics},
                           {"provenance", b.provenance},
                           {"tensors", tensor_list}};
  std::string out = detail::frame_header(header, detail::kBundleMagic);
  for (const auto& t : tensors) {
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(t.value(r, c)));
  }
  return out;
}

inline EstimatorBundle decode_bundle(const std::string& bytes) {
  auto [h, offset] = detail::split_framed_header(bytes, detail::kBundleMagic, "bundle");
  EstimatorBundle b;
  try {
    if (h.at("format_version").get<int>() != kBundleVersion) throw FormatError("bundle: unsupported format_version");
    auto kind = parse_estimator_kind(h.at("kind").get<std::string>());
    if (!kind) throw FormatError("bundle: unknown estimator kind");
    b.kind = *kind;
    b.layer = h.at("layer").get<int>();
    b.model.spec = detail::spec_from_json(h.at("spec"));
    b.model.epochs_run = h.at("training").at("epochs_run").get<std::size_t>();
    b.model.stopped_early = h.at("training").at("stopped_early").get<bool>();
    const auto& m = h.at("metrics");
    b.cv.accuracy = m.at("accuracy").get<double>();
    if (!m.at("balanced_accuracy").is_null()) b.cv.balanced_accuracy = m.at("balanced_accuracy").get<double>();
    b.cv.confusion = m.at("confusion").get<std::array<std::array<std::size_t, 2>, 2>>();
    b.cv.fold_specs = m.at("fold_specs").get<std::vector<std::string>>();
    b.validation_accuracy = m.at("validation_accuracy").get<double>();
    b.provenance = h.at("provenance");

    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::size_t pos = offset;
    std::map<std::string, Matrix> tensors;
    for (const auto& t : h.at("tensors")) {
      const auto rows = t.at("rows").get<std::size_t>(), cols = t.at("cols").get<std::size_t>();
      if ((bytes.size() - pos) / 8 < rows * cols) throw FormatError("bundle: truncated payload");
      Matrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c, pos += 8)
          v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::bit_cast<double>(detail::get_u64_le(p + pos));
      tensors[t.at("name").get<std::string>()] = std::move(v);
    }
    if (pos != bytes.size()) throw FormatError("bundle: header/payload size mismatch");

    auto need = [&](const std::string& name) -> Matrix& {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw FormatError("bundle: missing tensor " + name);
      return it->second;
    };
    b.standardizer.mean = need("standardizer.mean").row(0).transpose();
    b.standardizer.scale = need("standardizer.scale").row(0).transpose();
    const std::size_t n_layers = b.model.spec.hidden_layers.size() + 1;
    Eigen::Index fan_in = b.standardizer.mean.size();
    for (std::size_t i = 0; i < n_layers; ++i) {
      MlpLayer l{need("layer" + std::to_string(i) + ".weights"), need("layer" + std::to_string(i) + ".bias").row(0).transpose()};
      if (l.weights.rows() != fan_in || l.bias.size() != l.weights.cols()) throw FormatError("bundle: inconsistent layer shapes");
      fan_in = l.weights.cols();
      b.model.layers.push_back(std::move(l));
    }
    if (fan_in != 1) throw FormatError("bundle: output layer must have width 1");
    if (b.standardizer.scale.size() != b.standardizer.mean.size() ||
        static_cast<std::size_t>(b.standardizer.mean.size()) != h.at("input_dim").get<std::size_t>()) {
      throw FormatError("bundle: standardizer shape mismatch");
    }
    b.validation_x = need("validation.x");
    const Matrix& vy = need("validation.y");
    b.validation_y = vy.rows() == 0 ? Vector() : Vector(vy.row(0).transpose());
    if (b.validation_x.rows() > 0 && b.validation_x.cols() != b.standardizer.mean.size()) {
      throw FormatError("bundle: validation slice has wrong width");
    }
    if (b.validation_y.size() != b.validation_x.rows()) throw FormatError("bundle: validation slice length mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bundle: bad header: ") + e.what());
  }
  if (bundle_accuracy(b, b.validation_x, b.validation_y) != b.validation_accuracy) {
    throw FormatError("bundle: model does not reproduce its stored validation accuracy");
  }
  return b;
}

inline void save_bundle(const EstimatorBundle& b, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_bundle(b));
}

inline EstimatorBundle load_bundle(const std::filesystem::path& path) {
  return decode_bundle(detail::read_file_bytes(path));
}

struct TrainOptions {
  std::vector<MlpSpec> grid = default_grid();
  std::size_t folds = kDefaultFolds;
  std::uint64_t seed = kDefaultSeed;
  std::size_t validation_rows = 100;
};

struct TrainedEstimator {
  EstimatorBundle bundle;
  CvResult cv;
};

// Nested OOF evaluation for the reported metrics, then a final model fit on
// all rows with the spec chosen by grid search over all rows.
inline TrainedEstimator train_estimator(const Matrix& x, const Vector& y, EstimatorKind kind, int layer,
                                        const TrainOptions& opt = {}) {
  TrainedEstimator out;
  out.cv = nested_cross_val_oof(x, y, opt.grid, opt.folds, opt.seed);
  const auto gs = grid_search(x, y, opt.grid, opt.seed, opt.folds);
  auto& b = out.bundle;
  b.kind = kind;
  b.layer = layer;
  b.standardizer = fit_standardizer(x);
  b.model = train_mlp(b.standardizer.apply(x), y, gs.best);
  b.cv = summarize(out.cv);
  const auto m = std::min<Eigen::Index>(static_cast<Eigen::Index>(opt.validation_rows), x.rows());
  b.validation_x = x.topRows(m);
  b.validation_y = y.head(m);
  b.validation_accuracy = bundle_accuracy(b, b.validation_x, b.validation_y);
  return out;
}

}  // namespace toolcall
