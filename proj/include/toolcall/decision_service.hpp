#pragma once

// Live call/no-call decisions from a loaded estimator bundle, with a hard
// server-side budget.
//
//   POST /v1/decide   {"embedding": [..]} or {"instance_id": ".."},
//                     optional "budget_override"
//   GET  /v1/health   {"status", "bundle_kind", "remaining_calls"}
//   GET  /v1/ledger   {"n_finished", "n_calls", "remaining_calls"}

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include "toolcall/affordability.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/estimator_bundle.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

// Carries the HTTP status to answer with.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  std::string bind = "127.0.0.1:8080";
  std::filesystem::path bundle_path;
  BudgetSpec budget;
  double tau = 0.5;
};

struct DecideRequest {
  std::optional<std::vector<double>> embedding;
  std::optional<std::string> instance_id;
  // Caps the calls still allowed for this request; never raises the ledger.
  std::optional<std::size_t> budget_override;
};

struct DecideResponse {
  bool call = false;
  double probability = 0.0;
  std::size_t remaining_calls = 0;
  std::string policy;
};

inline DecideRequest decide_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ServiceError(400, "request body must be an object");
  DecideRequest r;
  try {
    if (j.contains("embedding")) r.embedding = j.at("embedding").get<std::vector<double>>();
    if (j.contains("instance_id")) r.instance_id = j.at("instance_id").get<std::string>();
    if (j.contains("budget_override") && !j.at("budget_override").is_null()) {
      const auto& b = j.at("budget_override");
      if (!b.is_number_unsigned() && !(b.is_number_integer() && b.get<std::int64_t>() >= 0)) {
        throw ServiceError(400, "budget_override must be a non-negative integer");
      }
      r.budget_override = b.get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("bad request: ") + e.what());
  }
  if (r.embedding.has_value() == r.instance_id.has_value()) {
    throw ServiceError(400, "request needs exactly one of embedding or instance_id");
  }
  return r;
}

inline nlohmann::json to_json(const DecideResponse& r) {
  return {{"call", r.call}, {"probability", r.probability}, {"remaining_calls", r.remaining_calls}, {"policy", r.policy}};
}

inline nlohmann::json to_json(const BudgetLedger& l) {
  return {{"n_finished", l.n_finished}, {"n_calls", l.n_calls}, {"remaining_calls", l.remaining_calls}};
}

class DecisionService {
 public:
  explicit DecisionService(BudgetSpec budget = {}, double tau = 0.5) : budget_(budget), tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0,1)");
    if (!(budget.per_call_cost > 0.0) && budget.n_questions == 0) {
      throw InvalidArgument("service needs a positive per-call cost or a question count");
    }
    ledger_ = make_ledger(budget_, 0);
  }

  void set_bundle(std::shared_ptr<const EstimatorBundle> b) {
    std::lock_guard lock(mu_);
    bundle_ = std::move(b);
  }

  void load(const std::filesystem::path& path) {
    set_bundle(std::make_shared<const EstimatorBundle>(load_bundle(path)));
  }

  // Feature rows for instance_id lookups.
  void attach_features(const TraceSet& ts, const Matrix& x) {
    if (static_cast<std::size_t>(x.rows()) != ts.size()) throw InvalidArgument("attach_features: row count mismatch");
    std::unordered_map<std::string, std::vector<double>> rows;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      auto& v = rows[ts.records[i].instance_id];
      v.resize(static_cast<std::size_t>(x.cols()));
      for (Eigen::Index j = 0; j < x.cols(); ++j) v[static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(i), j);
    }
    std::lock_guard lock(mu_);
    features_ = std::move(rows);
  }

  bool loaded() const {
    std::lock_guard lock(mu_);
    return bundle_ != nullptr;
  }

  std::shared_ptr<const EstimatorBundle> bundle() const {
    std::lock_guard lock(mu_);
    return bundle_;
  }

  BudgetLedger ledger() const {
    std::lock_guard lock(mu_);
    return ledger_;
  }

  double tau() const noexcept { return tau_; }

  std::string policy_tag() const {
    auto b = bundle();
    return b ? "estimator-threshold:" + to_string(b->kind) : "unloaded";
  }

  DecideResponse handle_decide(const DecideRequest& req) {
    std::shared_ptr<const EstimatorBundle> b;
    std::vector<double> x;
    {
      std::lock_guard lock(mu_);
      b = bundle_;
      if (!b) throw ServiceError(503, "no bundle loaded");
      if (req.instance_id) {
        auto it = features_.find(*req.instance_id);
        if (it == features_.end()) throw ServiceError(404, "unknown instance_id '" + *req.instance_id + "'");
        x = it->second;
      }
    }
    if (req.embedding) x = *req.embedding;
    if (x.size() != b->input_dim()) {
      throw ServiceError(400, "embedding has dimension " + std::to_string(x.size()) + ", bundle expects " +
                                  std::to_string(b->input_dim()));
    }
    for (double v : x)
      if (!std::isfinite(v)) throw ServiceError(400, "embedding contains non-finite values");

    DecideResponse resp;
    resp.probability = b->predict_proba(std::span<const double>(x));
    resp.policy = "estimator-threshold:" + to_string(b->kind);

    std::lock_guard lock(mu_);
    std::size_t allowed = ledger_.remaining_calls;
    if (req.budget_override) allowed = std::min(allowed, *req.budget_override);
    resp.call = allowed > 0 && resp.probability >= tau_;
    ++ledger_.n_finished;
    if (resp.call) {
      ++ledger_.n_calls;
      ledger_.remaining_calls = make_ledger(budget_, ledger_.n_calls).remaining_calls;
    }
    resp.remaining_calls = ledger_.remaining_calls;
    return resp;
  }

 private:
  BudgetSpec budget_;
  double tau_;
  mutable std::mutex mu_;
  std::shared_ptr<const EstimatorBundle> bundle_;
  BudgetLedger ledger_;
  std::unordered_map<std::string, std::vector<double>> features_;
};

namespace detail {

inline void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace detail

// Registers the routes on a server; the caller binds and listens.
inline void install_routes(httplib::Server& server, DecisionService& svc) {
  server.Post("/v1/decide", [&svc](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = nlohmann::json::parse(req.body);
      detail::reply_json(res, 200, to_json(svc.handle_decide(decide_request_from_json(body))));
    } catch (const nlohmann::json::parse_error& e) {
      detail::reply_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const ServiceError& e) {
      detail::reply_json(res, e.status(), {{"error", e.what()}});
    } catch (const std::exception& e) {
      detail::reply_json(res, 500, {{"error", e.what()}});
    }
  });
  server.Get("/v1/health", [&svc](const httplib::Request&, httplib::Response& res) {
    auto b = svc.bundle();
    detail::reply_json(res, 200,
                       {{"status", b ? "ok" : "unloaded"},
                        {"bundle_kind", b ? nlohmann::json(to_string(b->kind)) : nlohmann::json(nullptr)},
                        {"remaining_calls", svc.ledger().remaining_calls}});
  });
  server.Get("/v1/ledger", [&svc](const httplib::Request&, httplib::Response& res) {
    detail::reply_json(res, 200, to_json(svc.ledger()));
  });
}

// "host:port" or ":port"; a bare port binds to 127.0.0.1.
inline std::pair<std::string, int> parse_bind(const std::string& bind) {
  std::string host = "127.0.0.1", port = bind;
  if (auto pos = bind.rfind(':'); pos != std::string::npos) {
    if (pos > 0) host = bind.substr(0, pos);
    port = bind.substr(pos + 1);
  }
  int p = 0;
  auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
  if (ec != std::errc{} || end != port.data() + port.size() || p < 0 || p > 65535) {
    throw InvalidArgument("bad bind address '" + bind + "'");
  }
  return {host, p};
}

}  // namespace toolcall
