#pragma once

// Run configuration shared by the command-line subcommands. A JSON config
// file uses the same field names; flags given on the command line win.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toolcall/affordability.hpp"
#include "toolcall/cross_validation.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/mlp.hpp"

namespace toolcall {

struct AnalyticDefaults {
  double low_hi;
  double high_lo;
  double need_threshold;
  double eps;
  double tau;
  double budget;
  std::size_t folds;
  std::uint64_t seed;
};

inline constexpr AnalyticDefaults kDefaults{kDefaultLowHi, kDefaultHighLo, kDefaultNeedThreshold, kDefaultEps,
                                            0.5,           kDefaultBudget, kDefaultFolds,         kDefaultSeed};

struct RunConfig {
  std::filesystem::path trace;
  std::filesystem::path embeddings;  // defaults to the trace file's directory
  std::filesystem::path out;
  std::filesystem::path bundle;

  double low_hi = kDefaults.low_hi;
  double high_lo = kDefaults.high_lo;
  double need_threshold = kDefaults.need_threshold;
  double eps = kDefaults.eps;
  double tau = kDefaults.tau;

  double budget = kDefaults.budget;
  std::optional<double> cost;
  std::size_t n_questions = 0;

  std::optional<std::string> variant;
  std::string estimator = "lne";
  std::string layer = "auto";
  std::vector<MlpSpec> grid = default_grid();
  std::size_t folds = kDefaults.folds;
  std::uint64_t seed = kDefaults.seed;
  std::vector<std::string> policies;
  std::string bind = "127.0.0.1:8080";

  BucketThresholds buckets() const { return {low_hi, high_lo}; }

  std::filesystem::path embedding_dir() const {
    if (!embeddings.empty()) return embeddings;
    return trace.has_parent_path() ? trace.parent_path() : std::filesystem::path(".");
  }

  void check() const {
    buckets().check();
    if (!(need_threshold >= 0.0 && need_threshold <= 1.0)) throw InvalidArgument("need threshold must lie in [0,1]");
    if (!(eps >= 0.0)) throw InvalidArgument("eps must be >= 0");
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0,1)");
    if (!(budget >= 0.0)) throw InvalidArgument("budget must be >= 0");
    if (cost && !(*cost >= 0.0)) throw InvalidArgument("cost must be >= 0");
    if (folds < 2) throw InvalidArgument("folds must be >= 2");
    if (grid.empty()) throw InvalidArgument("grid must not be empty");
    if (layer != "auto") {
      try {
        std::size_t pos = 0;
        const int v = std::stoi(layer, &pos);
        if (pos != layer.size() || v < 0) throw InvalidArgument("");
      } catch (const std::exception&) {
        throw InvalidArgument("layer must be 'auto' or a non-negative integer");
      }
    }
  }
};

namespace detail {

inline MlpSpec grid_entry_from_json(const nlohmann::json& j) {
  MlpSpec s;
  for (const auto& [k, v] : j.items()) {
    if (k == "hidden_layers") s.hidden_layers = v.get<std::vector<std::size_t>>();
    else if (k == "learning_rate") s.learning_rate = v.get<double>();
    else if (k == "max_epochs") s.max_epochs = v.get<std::size_t>();
    else if (k == "patience") s.patience = v.get<std::size_t>();
    else if (k == "l2_penalty") s.l2_penalty = v.get<double>();
    else if (k == "batch_size") s.batch_size = v.get<std::size_t>();
    else throw InvalidArgument("config: unknown grid field '" + k + "'");
  }
  return s;
}

}  // namespace detail

// Applies the fields present in j on top of cfg.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "trace") cfg.trace = v.get<std::string>();
      else if (k == "embeddings") cfg.embeddings = v.get<std::string>();
      else if (k == "out") cfg.out = v.get<std::string>();
      else if (k == "bundle") cfg.bundle = v.get<std::string>();
      else if (k == "low_hi") cfg.low_hi = v.get<double>();
      else if (k == "high_lo") cfg.high_lo = v.get<double>();
      else if (k == "need_threshold") cfg.need_threshold = v.get<double>();
      else if (k == "eps") cfg.eps = v.get<double>();
      else if (k == "tau") cfg.tau = v.get<double>();
      else if (k == "budget") cfg.budget = v.get<double>();
      else if (k == "cost") cfg.cost = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (k == "n_questions") cfg.n_questions = v.get<std::size_t>();
      else if (k == "variant") cfg.variant = v.get<std::string>();
      else if (k == "estimator") cfg.estimator = v.get<std::string>();
      else if (k == "layer") cfg.layer = v.is_number_integer() ? std::to_string(v.get<int>()) : v.get<std::string>();
      else if (k == "folds") cfg.folds = v.get<std::size_t>();
      else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "policies") cfg.policies = v.get<std::vector<std::string>>();
      else if (k == "bind") cfg.bind = v.get<std::string>();
      else if (k == "grid") {
        cfg.grid.clear();
        for (const auto& e : v) cfg.grid.push_back(detail::grid_entry_from_json(e));
      } else {
        throw InvalidArgument("config: unknown field '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("config file " + path.string() + ": " + e.what());
  }
  apply_config_json(cfg, j);
}

}  // namespace toolcall
