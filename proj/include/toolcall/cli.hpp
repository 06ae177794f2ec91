#pragma once

// The `toolcall` command line: validate, label, align, afford, train,
// simulate, serve, report and synth.
//
// Exit status: 0 success, 1 validation findings or data errors, 2 usage errors.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toolcall/affordability.hpp"
#include "toolcall/alignment.hpp"
#include "toolcall/config.hpp"
#include "toolcall/decision_service.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/estimator_bundle.hpp"
#include "toolcall/features.hpp"
#include "toolcall/labeling.hpp"
#include "toolcall/policy.hpp"
#include "toolcall/report.hpp"
#include "toolcall/synth.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

// Raw flag storage; only flags actually given override the config.
struct Flags {
  std::string config, trace, embeddings, out, bundle, variant, estimator, layer, bind, preset;
  double low_hi = 0, high_lo = 0, need_threshold = 0, eps = 0, tau = 0, budget = 0, cost = 0;
  std::size_t folds = 0, n_questions = 0, layers = 1, signal_layer = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> policies;
  std::vector<CLI::Option*> options;

  bool given(const std::string& name) const {
    for (auto* o : options)
      if (o->check_lname(name) && o->count() > 0) return true;
    return false;
  }
};

inline void add_flags(CLI::App* app, Flags& f, const std::vector<std::string>& names) {
  auto keep = [&](CLI::Option* o) { f.options.push_back(o); };
  for (const auto& n : names) {
    if (n == "config") keep(app->add_option("--config", f.config, "JSON config file; flags override its fields"));
    else if (n == "trace") keep(app->add_option("--trace", f.trace, "trace file (JSON lines)"));
    else if (n == "embeddings") keep(app->add_option("--embeddings", f.embeddings, "embedding directory (default: trace directory)"));
    else if (n == "out") keep(app->add_option("--out", f.out, "output directory"));
    else if (n == "bundle") keep(app->add_option("--bundle", f.bundle, "estimator bundle file")->envname("TOOLCALL_BUNDLE"));
    else if (n == "variant") keep(app->add_option("--variant", f.variant, "perceived-need prompt variant")->check(CLI::IsMember({"v1", "v2", "v3"})));
    else if (n == "estimator") keep(app->add_option("--estimator", f.estimator, "estimator kind")->check(CLI::IsMember({"lne", "lue-x", "lue-xd"})));
    else if (n == "layer") keep(app->add_option("--layer", f.layer, "representation layer, or auto"));
    else if (n == "bind") keep(app->add_option("--bind", f.bind, "host:port to listen on")->envname("TOOLCALL_BIND"));
    else if (n == "low-hi") keep(app->add_option("--low-hi", f.low_hi, "upper edge of the Low bucket"));
    else if (n == "high-lo") keep(app->add_option("--high-lo", f.high_lo, "lower edge of the High bucket"));
    else if (n == "need-threshold") keep(app->add_option("--need-threshold", f.need_threshold, "no-tool score at or below which the tool is needed"));
    else if (n == "eps") keep(app->add_option("--eps", f.eps, "gain tolerance"));
    else if (n == "tau") keep(app->add_option("--tau", f.tau, "probability threshold for a call")->envname("TOOLCALL_TAU"));
    else if (n == "budget") keep(app->add_option("--budget", f.budget, "total budget")->envname("TOOLCALL_BUDGET"));
    else if (n == "cost") keep(app->add_option("--cost", f.cost, "per-call cost")->envname("TOOLCALL_COST"));
    else if (n == "n-questions") keep(app->add_option("--n-questions", f.n_questions, "call allowance when no cost is set")->envname("TOOLCALL_N_QUESTIONS"));
    else if (n == "k") keep(app->add_option("--k", f.folds, "cross-validation folds"));
    else if (n == "seed") keep(app->add_option("--seed", f.seed, "random seed"));
    else if (n == "policy") keep(app->add_option("--policy", f.policies, "policies to evaluate (repeatable)")
                                     ->check(CLI::IsMember({"no-tool", "always-tool", "self-decision", "oracle",
                                                            "estimator-threshold", "estimator-budget"})));
    else if (n == "preset") keep(app->add_option("--preset", f.preset, "fixture preset")->required()
                                     ->check(CLI::IsMember({"table1", "fig3", "separable", "noisy-self"})));
    else if (n == "layers") keep(app->add_option("--layers", f.layers, "number of embedding layers"));
    else if (n == "signal-layer") keep(app->add_option("--signal-layer", f.signal_layer, "layer carrying the class signal"));
  }
}

inline RunConfig resolve_config(const Flags& f) {
  RunConfig c;
  try {
    if (f.given("config")) load_config_file(c, f.config);
    if (f.given("trace")) c.trace = f.trace;
    if (f.given("embeddings")) c.embeddings = f.embeddings;
    if (f.given("out")) c.out = f.out;
    if (f.given("bundle")) c.bundle = f.bundle;
    if (f.given("variant")) c.variant = f.variant;
    if (f.given("estimator")) c.estimator = f.estimator;
    if (f.given("layer")) c.layer = f.layer;
    if (f.given("bind")) c.bind = f.bind;
    if (f.given("low-hi")) c.low_hi = f.low_hi;
    if (f.given("high-lo")) c.high_lo = f.high_lo;
    if (f.given("need-threshold")) c.need_threshold = f.need_threshold;
    if (f.given("eps")) c.eps = f.eps;
    if (f.given("tau")) c.tau = f.tau;
    if (f.given("budget")) c.budget = f.budget;
    if (f.given("cost")) c.cost = f.cost;
    if (f.given("n-questions")) c.n_questions = f.n_questions;
    if (f.given("k")) c.folds = f.folds;
    if (f.given("seed")) c.seed = f.seed;
    if (f.given("policy")) c.policies = f.policies;
    c.check();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

inline void print_manifest(const Io& io, const std::filesystem::path& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) io.out << (dir / f).string() << "\n";
}

inline TraceSet load_trace(const RunConfig& c, bool check_embeddings) {
  require(!c.trace.empty(), "--trace is required");
  return load_trace_set(c.trace, LoadOptions{check_embeddings});
}

inline PromptVariant variant_of(const RunConfig& c) {
  require(c.variant.has_value(), "--variant is required (v1, v2 or v3)");
  auto v = parse_prompt_variant(*c.variant);
  require(v.has_value(), "unknown variant '" + *c.variant + "'");
  return *v;
}

inline EstimatorKind estimator_of(const RunConfig& c) {
  auto k = parse_estimator_kind(c.estimator);
  require(k.has_value(), "unknown estimator '" + c.estimator + "'");
  return *k;
}

inline nlohmann::json trace_provenance(const RunConfig& c, const TraceSet& ts) {
  return {{"trace", c.trace.filename().string()}, {"trace_provenance", ts.provenance}};
}

inline void add_label_sections(ReportBundle& r, const RunConfig& c, const TraceSet& ts) {
  const auto m = bucket_transition_matrix(ts, c.buckets());
  r.add({"bucket_matrix", "Bucket transitions (rows no-tool, columns always-tool)", to_table(m), "", {}});
  r.add({"bucket_regions", "Utility regions of the bucket matrix", region_table(m), "", {}});
  r.add({"labels", "Per-instance labels", label_table(ts, {c.buckets(), c.need_threshold, c.eps}), "", {}});
}

inline void add_align_sections(ReportBundle& r, const RunConfig& c, const TraceSet& ts, PromptVariant v) {
  const auto need = need_confusion(ts, v, c.need_threshold);
  const auto util = utility_confusion(ts, c.eps);
  const auto cons = consistency_matrix(ts, v);
  r.add({"need_confusion", "True need (rows) vs perceived need (columns)", to_table(need, "true_need", "perceived_need"), "", {}});
  r.add({"need_summary", "Perceived need agreement", summary_table(need), "", {}});
  r.add({"utility_confusion", "Positive utility (rows) vs self-decision call (columns)",
         to_table(util, "positive_utility", "self_called"), "", {}});
  r.add({"utility_summary", "Self-decision agreement", summary_table(util), "", {}});
  r.add({"consistency", "Perceived need (rows) vs self-decision call (columns)",
         to_table(cons, "perceived_need", "self_called"), "", {}});
  r.add({"venn", "Overlap of positive utility, perceived need and self-decision calls", to_table(venn_counts(ts, v, c.eps)), "", {}});
}

inline std::vector<double> estimator_probabilities(const RunConfig& c, const TraceSet& ts, const EstimatorBundle& b) {
  const auto x = feature_matrix(ts, c.embedding_dir(), condition_for(b.kind), b.layer);
  const Vector p = b.predict_proba(x);
  return {p.data(), p.data() + p.size()};
}

inline std::vector<std::string> ranking_by_proba(const TraceSet& ts, const std::vector<double>& p) {
  return budget_topk_by_proba(ts, p, ts.size()).ids;
}

inline void add_afford_sections(ReportBundle& r, const RunConfig& c, const TraceSet& ts,
                                const std::optional<std::vector<double>>& probas) {
  std::vector<double> costs;
  if (c.cost) {
    costs.push_back(*c.cost);
  } else {
    costs = cost_levels_for_coverage(c.budget, ts.size(), {10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
  }
  r.add({"gain_oracle", "Oracle gain curve", to_table(gain_curve(ts, oracle_selector(ts, c.eps), costs, c.budget)), "", {}});
  r.add({"gain_self", "Self-decision gain curve (first K calls kept)",
         to_table(gain_curve(ts, observed_selector(ts), costs, c.budget)), "", {}});
  if (probas) {
    r.add({"gain_estimator", "Estimator budget gain curve",
           to_table(gain_curve(ts, ranked_selector(ranking_by_proba(ts, *probas)), costs, c.budget)), "", {}});
  }
  const auto observed = observed_calls(ts);
  std::size_t events = 0;
  for (const auto& rec : ts.records) events += rec.self_call_count;
  Table t{{"cost", "permitted", "self_calls", "kept", "over_budget"}, {}};
  for (double cost : costs) {
    const auto k = permitted_calls(c.budget, cost, ts.size());
    const auto capped = cap_first_k(observed, k);
    t.add({cost, count_cell(k), count_cell(events), count_cell(capped.selection.ids.size()), count_cell(capped.over_budget)});
  }
  r.add({"budget_accounting", "Self-decision calls against the permitted budget", t, "",
         {{"permitted", "calls the budget allows"},
          {"self_calls", "call events made by the self-decision setup"},
          {"kept", "self-decision calls within the first K"},
          {"over_budget", "self-decision calls beyond the budget"}}});
}

inline std::vector<PolicyOutcome> run_policies(const RunConfig& c, const TraceSet& ts,
                                               const std::optional<std::vector<double>>& probas) {
  std::vector<std::string> names = c.policies;
  if (names.empty()) {
    names = {"no-tool", "always-tool", "self-decision", "oracle"};
    if (probas) {
      names.push_back("estimator-threshold");
      if (c.cost) names.push_back("estimator-budget");
    }
  }
  PolicyContext ctx;
  ctx.eps = c.eps;
  if (probas) {
    for (std::size_t i = 0; i < ts.size(); ++i) ctx.probabilities[ts.records[i].instance_id] = (*probas)[i];
  }
  std::vector<PolicyOutcome> out;
  for (const auto& n : names) {
    PolicyKind kind;
    if (n == "no-tool") kind = NoToolPolicy{};
    else if (n == "always-tool") kind = AlwaysToolPolicy{};
    else if (n == "self-decision") kind = SelfDecisionPolicy{};
    else if (n == "oracle") kind = OraclePolicy{};
    else if (n == "estimator-threshold") {
      require(probas.has_value(), "estimator-threshold needs --bundle");
      kind = EstimatorThresholdPolicy{c.tau};
    } else if (n == "estimator-budget") {
      require(probas.has_value(), "estimator-budget needs --bundle");
      require(c.cost.has_value(), "estimator-budget needs --cost");
      kind = EstimatorBudgetPolicy{permitted_calls(c.budget, *c.cost, ts.size())};
    } else {
      throw UsageError("unknown policy '" + n + "'");
    }
    out.push_back(evaluate_policy(ts, kind, ctx));
  }
  return out;
}

inline std::optional<std::vector<double>> maybe_probabilities(const RunConfig& c, const TraceSet& ts) {
  if (c.bundle.empty()) return std::nullopt;
  return estimator_probabilities(c, ts, load_bundle(c.bundle));
}

inline int cmd_validate(const RunConfig& c, const Io& io) {
  require(!c.trace.empty(), "--trace is required");
  TraceSet ts;
  try {
    ts = parse_trace_set(c.trace);
  } catch (const ParseError& e) {
    io.out << "parse error: " << e.what() << "\n";
    return kExitFindings;
  }
  const auto dir = c.embeddings.empty() ? c.trace.parent_path() : c.embeddings;
  const auto violations = validate(ts, file_row_counts(dir));
  if (violations.empty()) {
    io.out << "ok: " << ts.size() << " records\n";
    return kExitOk;
  }
  io.out << format_violations(violations);
  io.out << violations.size() << " finding(s)\n";
  return kExitFindings;
}

inline int cmd_label(const RunConfig& c, const Io& io) {
  require(!c.out.empty(), "--out is required");
  const auto ts = load_trace(c, false);
  ReportBundle r{"Labels and bucket transitions", {}};
  add_label_sections(r, c, ts);
  print_manifest(io, c.out, emit(r, c.out));
  return kExitOk;
}

inline int cmd_align(const RunConfig& c, const Io& io) {
  require(!c.out.empty(), "--out is required");
  const auto v = variant_of(c);
  const auto ts = load_trace(c, false);
  ReportBundle r{"Perceived versus true need and utility", {}};
  add_align_sections(r, c, ts, v);
  print_manifest(io, c.out, emit(r, c.out));
  return kExitOk;
}

inline int cmd_afford(const RunConfig& c, const Io& io) {
  require(!c.out.empty(), "--out is required");
  const auto ts = load_trace(c, !c.bundle.empty());
  ReportBundle r{"Budget-constrained gain", {}};
  add_afford_sections(r, c, ts, maybe_probabilities(c, ts));
  print_manifest(io, c.out, emit(r, c.out));
  return kExitOk;
}

inline int cmd_train(const RunConfig& c, const Io& io) {
  require(!c.out.empty(), "--out is required");
  const auto kind = estimator_of(c);
  const auto ts = load_trace(c, true);
  const auto cond = condition_for(kind);
  const auto dir = c.embedding_dir();
  const Vector y = estimator_labels(ts, kind, c.need_threshold, c.eps);

  auto grid = c.grid;
  for (auto& s : grid) s.seed = c.seed;

  ReportBundle r{"Estimator training", {}};
  int layer = 0;
  if (c.layer == "auto") {
    const auto layers = discover_layers(dir, cond);
    if (layers.empty()) throw MissingEmbedding("no " + to_string(cond) + " layer files in " + dir.string());
    std::vector<std::pair<int, Matrix>> per_layer;
    for (int l : layers) per_layer.emplace_back(l, feature_matrix(ts, dir, cond, l));
    const auto search = layer_search(per_layer, y, grid, c.folds, c.seed);
    layer = search.best_layer();
    r.add({"layer_search", "Best out-of-fold accuracy per layer", to_table(search, grid), "", {}});
  } else {
    layer = std::stoi(c.layer);
  }

  const Matrix x = feature_matrix(ts, dir, cond, layer);
  TrainOptions opt;
  opt.grid = grid;
  opt.folds = c.folds;
  opt.seed = c.seed;
  auto trained = train_estimator(x, y, kind, layer, opt);
  trained.bundle.provenance = trace_provenance(c, ts);
  trained.bundle.provenance["seed"] = c.seed;
  trained.bundle.provenance["folds"] = c.folds;

  std::filesystem::create_directories(c.out);
  save_bundle(trained.bundle, c.out / "bundle.teb1");

  Table metrics{{"metric", "value"}, {}};
  metrics.add({std::string("estimator"), to_string(kind)});
  metrics.add({std::string("layer"), static_cast<std::int64_t>(layer)});
  metrics.add({std::string("instances"), count_cell(ts.size())});
  metrics.add({std::string("oof_accuracy"), trained.cv.accuracy()});
  metrics.add({std::string("oof_balanced_accuracy"), real_cell(trained.cv.balanced_accuracy())});
  metrics.add({std::string("final_spec"), trained.bundle.model.spec.label()});
  r.add({"metrics", "Out-of-fold metrics", metrics, "", {}});
  r.add({"folds", "Outer folds", fold_table(trained.cv), "", {}});
  auto files = emit(r, c.out);
  files.push_back("bundle.teb1");
  std::sort(files.begin(), files.end());
  print_manifest(io, c.out, files);
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& c, const Io& io) {
  require(!c.out.empty(), "--out is required");
  const auto ts = load_trace(c, !c.bundle.empty());
  const auto probas = maybe_probabilities(c, ts);
  const auto outcomes = run_policies(c, ts, probas);
  ReportBundle r{"Policy outcomes", {}};
  r.add({"policies", "Mean score (calls) per policy", to_table(outcomes), "", {}});
  const auto files = emit(r, c.out);
  io.out << to_markdown(to_table(outcomes));
  print_manifest(io, c.out, files);
  return kExitOk;
}

inline int cmd_report(const RunConfig& c, const Io& io) {
  require(!c.out.empty(), "--out is required");
  const auto ts = load_trace(c, !c.bundle.empty());
  const auto probas = maybe_probabilities(c, ts);
  ReportBundle r{"Tool-call decision report", {}};
  r.add({"policies", "Mean score (calls) per policy", to_table(run_policies(c, ts, probas)), "", {}});
  add_label_sections(r, c, ts);
  if (c.variant) add_align_sections(r, c, ts, variant_of(c));
  add_afford_sections(r, c, ts, probas);
  print_manifest(io, c.out, emit(r, c.out));
  return kExitOk;
}

inline int cmd_serve(const RunConfig& c, const Io& io) {
  require(!c.bundle.empty(), "--bundle is required");
  BudgetSpec spec{c.budget, c.cost.value_or(0.0), c.n_questions};
  std::unique_ptr<DecisionService> svc;
  try {
    svc = std::make_unique<DecisionService>(spec, c.tau);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  svc->load(c.bundle);
  if (!c.trace.empty()) {
    const auto ts = load_trace(c, true);
    const auto b = svc->bundle();
    svc->attach_features(ts, feature_matrix(ts, c.embedding_dir(), condition_for(b->kind), b->layer));
  }
  std::pair<std::string, int> where;
  try {
    where = parse_bind(c.bind);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  httplib::Server server;
  install_routes(server, *svc);
  if (!server.bind_to_port(where.first, where.second)) throw Error("cannot bind " + c.bind);
  io.out << "listening on " << where.first << ":" << where.second << std::endl;
  server.listen_after_bind();
  return kExitOk;
}

inline int cmd_synth(const RunConfig& c, const Flags& f, const Io& io) {
  require(!c.out.empty(), "--out is required");
  if (f.preset == "table1") {
    std::filesystem::create_directories(c.out);
    write_trace_set(aggregate_fixture({}, c.seed), c.out / "trace.jsonl");
  } else {
    SynthConfig cfg = f.preset == "fig3" ? figure3_config()
                      : f.preset == "separable" ? separable_config()
                                                : noisy_self_config();
    cfg.buckets = c.buckets();
    if (f.given("layers")) cfg.layers = f.layers;
    if (f.given("signal-layer")) cfg.signal_layer = f.signal_layer;
    try {
      write_synth_output(synth_trace(cfg, c.seed), c.out);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(c.out)) files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  print_manifest(io, c.out, files);
  return kExitOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Io io{out, err};
  CLI::App app{"Tool-call decision analysis and control"};
  app.name("toolcall");
  app.require_subcommand(1);

  detail::Flags f;
  const std::vector<std::string> analysis = {"config", "trace", "embeddings", "out", "low-hi", "high-lo",
                                             "need-threshold", "eps", "seed"};
  auto with = [&](std::vector<std::string> extra) {
    auto v = analysis;
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
  };
  struct Sub {
    CLI::App* app;
    std::function<int(const RunConfig&)> fn;
  };
  std::vector<Sub> subs;
  auto add = [&](const std::string& name, const std::string& help, const std::vector<std::string>& flags,
                 std::function<int(const RunConfig&)> fn) {
    auto* s = app.add_subcommand(name, help);
    detail::add_flags(s, f, flags);
    subs.push_back({s, std::move(fn)});
  };
  add("validate", "check a trace file and its embedding references", {"config", "trace", "embeddings"},
      [&](const RunConfig& c) { return detail::cmd_validate(c, io); });
  add("label", "per-instance labels and bucket transitions", analysis,
      [&](const RunConfig& c) { return detail::cmd_label(c, io); });
  add("align", "perceived versus true need and utility", with({"variant"}),
      [&](const RunConfig& c) { return detail::cmd_align(c, io); });
  add("afford", "gain curves under a budget", with({"budget", "cost", "bundle"}),
      [&](const RunConfig& c) { return detail::cmd_afford(c, io); });
  add("train", "fit an estimator bundle", with({"estimator", "layer", "k"}),
      [&](const RunConfig& c) { return detail::cmd_train(c, io); });
  add("simulate", "evaluate decision policies", with({"policy", "bundle", "tau", "budget", "cost"}),
      [&](const RunConfig& c) { return detail::cmd_simulate(c, io); });
  add("serve", "answer live decisions over HTTP",
      {"config", "trace", "embeddings", "bundle", "bind", "budget", "cost", "n-questions", "tau"},
      [&](const RunConfig& c) { return detail::cmd_serve(c, io); });
  add("report", "emit every analysis", with({"variant", "policy", "bundle", "tau", "budget", "cost"}),
      [&](const RunConfig& c) { return detail::cmd_report(c, io); });
  add("synth", "write a synthetic trace fixture", {"config", "out", "seed", "low-hi", "high-lo", "preset", "layers", "signal-layer"},
      [&](const RunConfig& c) { return detail::cmd_synth(c, f, io); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto cfg = detail::resolve_config(f);
    for (auto& s : subs)
      if (s.app->parsed()) return s.fn(cfg);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFindings;
  }
}

}  // namespace toolcall::cli
