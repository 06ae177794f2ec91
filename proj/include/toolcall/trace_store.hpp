#pragma once

// Trace files: UTF-8, newline-delimited JSON. Line 1 is the header
// {"trace_version":1, "provenance":{...}}; each further line is one record.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "toolcall/embeddings.hpp"
#include "toolcall/errors.hpp"

namespace toolcall {

inline constexpr int kTraceVersion = 1;

enum class PromptVariant { v1, v2, v3 };
enum class EmbeddingCondition { no_tool_input, with_tool_desc };

inline std::string to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::v1: return "v1";
    case PromptVariant::v2: return "v2";
    case PromptVariant::v3: return "v3";
  }
  return "?";
}

inline std::optional<PromptVariant> parse_prompt_variant(std::string_view s) {
  if (s == "v1") return PromptVariant::v1;
  if (s == "v2") return PromptVariant::v2;
  if (s == "v3") return PromptVariant::v3;
  return std::nullopt;
}

inline std::string to_string(EmbeddingCondition c) {
  return c == EmbeddingCondition::no_tool_input ? "no_tool_input" : "with_tool_desc";
}

inline std::optional<EmbeddingCondition> parse_embedding_condition(std::string_view s) {
  if (s == "no_tool_input") return EmbeddingCondition::no_tool_input;
  if (s == "with_tool_desc") return EmbeddingCondition::with_tool_desc;
  return std::nullopt;
}

struct EmbeddingRef {
  std::string path;  // relative paths resolve against the trace file's directory
  std::size_t row = 0;
  int layer = 0;

  friend bool operator==(const EmbeddingRef&, const EmbeddingRef&) = default;
};

struct TraceRecord {
  std::string instance_id;
  std::uint64_t seq_index = 0;
  std::string task_name;
  std::string model_id;
  double s_no_tool = 0.0;
  double s_always_tool = 0.0;
  bool self_called = false;
  std::uint32_t self_call_count = 0;
  // A present key with no value is an unparseable answer.
  std::map<PromptVariant, std::optional<bool>> perceived_need;
  std::map<EmbeddingCondition, EmbeddingRef> embedding_refs;
  // Opaque; carried through, never interpreted.
  std::map<std::string, std::string> raw_texts;

  std::optional<bool> perceived(PromptVariant v) const {
    auto it = perceived_need.find(v);
    return it == perceived_need.end() ? std::nullopt : it->second;
  }

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TraceSet {
  std::vector<TraceRecord> records;  // ascending seq_index
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  friend bool operator==(const TraceSet&, const TraceSet&) = default;
};

struct Violation {
  std::string instance_id;
  std::string rule;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// Returns the row count of the EMB1 file at `path`, or nullopt if unreadable.
using RowCountLookup = std::function<std::optional<std::size_t>(const std::string& path)>;

// Reads EMB1 headers lazily, resolving relative paths against `base_dir`.
inline RowCountLookup file_row_counts(std::filesystem::path base_dir) {
  auto cache = std::make_shared<std::map<std::string, std::optional<std::size_t>>>();
  return [base_dir = std::move(base_dir), cache](const std::string& path) -> std::optional<std::size_t> {
    if (auto it = cache->find(path); it != cache->end()) return it->second;
    std::filesystem::path p(path);
    if (p.is_relative()) p = base_dir / p;
    std::optional<std::size_t> rows;
    try {
      rows = read_embedding_header(p).rows;
    } catch (const Error&) {
    }
    cache->emplace(path, rows);
    return rows;
  };
}

namespace detail {

inline nlohmann::json record_to_json(const TraceRecord& r) {
  nlohmann::json j = {{"instance_id", r.instance_id},
                      {"seq_index", r.seq_index},
                      {"task_name", r.task_name},
                      {"model_id", r.model_id},
                      {"s_no_tool", r.s_no_tool},
                      {"s_always_tool", r.s_always_tool},
                      {"self_called", r.self_called},
                      {"self_call_count", r.self_call_count}};
  if (!r.perceived_need.empty()) {
    nlohmann::json pn = nlohmann::json::object();
    for (const auto& [v, ans] : r.perceived_need) {
      pn[to_string(v)] = ans ? nlohmann::json(*ans) : nlohmann::json(nullptr);
    }
    j["perceived_need"] = std::move(pn);
  }
  if (!r.embedding_refs.empty()) {
    nlohmann::json refs = nlohmann::json::object();
    for (const auto& [c, ref] : r.embedding_refs) {
      refs[to_string(c)] = {{"path", ref.path}, {"row", ref.row}, {"layer", ref.layer}};
    }
    j["embedding_refs"] = std::move(refs);
  }
  if (!r.raw_texts.empty()) j["raw_texts"] = r.raw_texts;
  return j;
}

template <typename T>
T get_count(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ParseError(line, std::string(key) + " must be an integer");
  if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
    throw ParseError(line, std::string(key) + " must be non-negative");
  }
  const auto u = v.get<std::uint64_t>();
  if (u > std::numeric_limits<T>::max()) throw ParseError(line, std::string(key) + " out of range");
  return static_cast<T>(u);
}

inline TraceRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "record is not an object");
  TraceRecord r;
  try {
    r.instance_id = j.at("instance_id").get<std::string>();
    r.seq_index = get_count<std::uint64_t>(j, "seq_index", line);
    r.task_name = j.at("task_name").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.s_no_tool = j.at("s_no_tool").get<double>();
    r.s_always_tool = j.at("s_always_tool").get<double>();
    r.self_called = j.at("self_called").get<bool>();
    r.self_call_count = get_count<std::uint32_t>(j, "self_call_count", line);
    if (auto it = j.find("perceived_need"); it != j.end() && !it->is_null()) {
      for (const auto& [key, val] : it->items()) {
        auto v = parse_prompt_variant(key);
        if (!v) throw ParseError(line, "unknown prompt variant '" + key + "'");
        r.perceived_need[*v] = val.is_null() ? std::nullopt : std::optional<bool>(val.get<bool>());
      }
    }
    if (auto it = j.find("embedding_refs"); it != j.end() && !it->is_null()) {
      for (const auto& [key, val] : it->items()) {
        auto c = parse_embedding_condition(key);
        if (!c) throw ParseError(line, "unknown embedding condition '" + key + "'");
        r.embedding_refs[*c] = EmbeddingRef{val.at("path").get<std::string>(), val.at("row").get<std::size_t>(),
                                            val.at("layer").get<int>()};
      }
    }
    if (auto it = j.find("raw_texts"); it != j.end() && !it->is_null()) {
      r.raw_texts = it->get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line, std::string("bad record field: ") + e.what());
  }
  return r;
}

}  // namespace detail

// Record-level and cross-record checks. Embedding references are checked only
// when `rows` is provided.
inline std::vector<Violation> validate(const TraceSet& ts, const RowCountLookup& rows = {}) {
  std::vector<Violation> out;
  std::set<std::string> ids;
  std::set<std::uint64_t> seqs;
  for (const auto& r : ts.records) {
    auto score_ok = [](double s) { return std::isfinite(s) && s >= 0.0 && s <= 1.0; };
    if (r.instance_id.empty()) out.push_back({r.instance_id, "instance_id", "instance_id is empty"});
    if (!score_ok(r.s_no_tool)) {
      out.push_back({r.instance_id, "score_range", "s_no_tool outside [0,1]: " + std::to_string(r.s_no_tool)});
    }
    if (!score_ok(r.s_always_tool)) {
      out.push_back(
          {r.instance_id, "score_range", "s_always_tool outside [0,1]: " + std::to_string(r.s_always_tool)});
    }
    if (r.self_called != (r.self_call_count >= 1)) {
      out.push_back({r.instance_id, "self_call_consistency",
                     "self_called=" + std::string(r.self_called ? "true" : "false") +
                         " but self_call_count=" + std::to_string(r.self_call_count)});
    }
    if (!ids.insert(r.instance_id).second) {
      out.push_back({r.instance_id, "duplicate_instance_id", "instance_id appears more than once"});
    }
    if (!seqs.insert(r.seq_index).second) {
      out.push_back({r.instance_id, "duplicate_seq_index", "seq_index " + std::to_string(r.seq_index) +
                                                               " appears more than once"});
    }
    if (rows) {
      for (const auto& [cond, ref] : r.embedding_refs) {
        auto n = rows(ref.path);
        if (!n) {
          out.push_back({r.instance_id, "embedding_file",
                         "embedding_refs." + to_string(cond) + ": cannot read " + ref.path});
        } else if (ref.row >= *n) {
          out.push_back({r.instance_id, "embedding_row_range",
                         "embedding_refs." + to_string(cond) + ".row " + std::to_string(ref.row) +
                             " out of range for " + std::to_string(*n) + " rows"});
        }
      }
    }
  }
  return out;
}

inline std::string format_violations(const std::vector<Violation>& vs) {
  std::ostringstream os;
  for (const auto& v : vs) os << v.instance_id << ": [" << v.rule << "] " << v.message << '\n';
  return os.str();
}

// Parses without checking invariants; records come back sorted by seq_index.
inline TraceSet parse_trace_stream(std::istream& in) {
  TraceSet ts;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || !j.contains("trace_version")) throw ParseError(line_no, "missing trace header line");
      if (!j["trace_version"].is_number_integer() || j["trace_version"].get<int>() != kTraceVersion) {
        throw ParseError(line_no, "unsupported trace_version");
      }
      if (auto it = j.find("provenance"); it != j.end()) ts.provenance = *it;
      have_header = true;
      continue;
    }
    ts.records.push_back(detail::record_from_json(j, line_no));
  }
  if (!have_header) throw ParseError(line_no + 1, "empty trace file");
  std::stable_sort(ts.records.begin(), ts.records.end(),
                   [](const TraceRecord& a, const TraceRecord& b) { return a.seq_index < b.seq_index; });
  return ts;
}

inline TraceSet parse_trace_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file " + path.string());
  return parse_trace_stream(in);
}

struct LoadOptions {
  bool check_embeddings = true;
};

inline TraceSet load_trace_set(const std::filesystem::path& path, LoadOptions opts = {}) {
  TraceSet ts = parse_trace_set(path);
  RowCountLookup rows;
  if (opts.check_embeddings) rows = file_row_counts(path.parent_path());
  auto violations = validate(ts, rows);
  if (!violations.empty()) {
    throw ValidationError("trace " + path.string() + " failed validation:\n" + format_violations(violations));
  }
  return ts;
}

inline void write_trace_stream(const TraceSet& ts, std::ostream& out) {
  nlohmann::json header = {{"trace_version", kTraceVersion}};
  if (!ts.provenance.empty()) header["provenance"] = ts.provenance;
  out << header.dump() << '\n';
  for (const auto& r : ts.records) out << detail::record_to_json(r).dump() << '\n';
}

inline void write_trace_set(const TraceSet& ts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write trace file " + path.string());
  write_trace_stream(ts, out);
}

// Resolves an embedding reference's path relative to a trace directory.
inline std::filesystem::path resolve_ref_path(const std::filesystem::path& trace_dir, const EmbeddingRef& ref) {
  std::filesystem::path p(ref.path);
  return p.is_relative() ? trace_dir / p : p;
}

inline std::unordered_map<std::string, std::size_t> index_by_id(const TraceSet& ts) {
  std::unordered_map<std::string, std::size_t> idx;
  idx.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) idx.emplace(ts.records[i].instance_id, i);
  return idx;
}

}  // namespace toolcall
