#pragma once

// Writes named tables as CSV and Markdown files plus a README describing
// every emitted file and column.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "toolcall/errors.hpp"
#include "toolcall/table.hpp"

namespace toolcall {

struct ReportSection {
  std::string name;   // file stem: lowercase letters, digits, '_' and '-'
  std::string title;
  Table table;
  std::string note;
  std::map<std::string, std::string> column_docs;  // overrides the built-in descriptions
};

struct ReportBundle {
  std::string title = "Report";
  std::vector<ReportSection> sections;

  ReportBundle& add(ReportSection s) {
    for (const auto& existing : sections)
      if (existing.name == s.name) throw InvalidArgument("report: duplicate section '" + s.name + "'");
    sections.push_back(std::move(s));
    return *this;
  }
};

struct ReportFormats {
  bool csv = true;
  bool markdown = true;
};

inline std::string describe_column(const std::string& c) {
  static const std::map<std::string, std::string> docs = {
      {"policy", "decision policy"},
      {"score", "mean factuality score under the policy's decisions"},
      {"calls", "number of tool calls made"},
      {"summary", "score (calls), two decimals"},
      {"cost", "per-call cost"},
      {"coverage_pct", "permitted calls as a percentage of instances"},
      {"gain", "summed marginal gain of the selected instances"},
      {"ndcg", "NDCG@K of the selection; empty when K = 0"},
      {"layer", "representation layer index"},
      {"best_oof_accuracy", "best out-of-fold accuracy across the classifier grid"},
      {"best_spec", "classifier spec achieving best_oof_accuracy"},
      {"selected", "1 for the chosen layer"},
      {"fold", "outer fold index"},
      {"accuracy", "fraction of correct predictions"},
      {"balanced_accuracy", "mean per-class recall; empty for a single class"},
      {"spec", "classifier spec used"},
      {"included", "records with both labels defined"},
      {"excluded", "records lacking a label"},
      {"row_total", "records in the row"},
      {"row_positive_rate", "fraction of the row in column 1"},
      {"region", "Venn region (A = positive true utility, B = perceived need, C = self-decision call)"},
      {"count", "number of records"},
      {"0", "count in column 0"},
      {"1", "count in column 1"},
      {"Low", "count with always-tool score in Low"},
      {"Mid", "count with always-tool score in Mid"},
      {"High", "count with always-tool score in High"},
      {"total", "number of records"},
      {"positive", "records with positive utility"},
      {"negative", "records with negative utility"},
      {"neutral", "records with zero utility"},
      {"need_region_total", "records whose no-tool score is in Low or Mid"},
      {"need_region_positive", "need-region records with positive utility"},
      {"need_region_positive_rate", "need_region_positive / need_region_total"},
      {"instance_id", "instance identifier"},
      {"seq_index", "arrival order"},
      {"s_no_tool", "score without the tool"},
      {"s_always_tool", "score with a forced call"},
      {"bucket_no_tool", "bucket of s_no_tool"},
      {"bucket_always_tool", "bucket of s_always_tool"},
      {"true_need", "1 when s_no_tool is at or below the need threshold"},
      {"true_utility", "sign of the gain beyond eps (-1, 0, 1)"},
      {"marginal_gain", "s_always_tool - s_no_tool"},
      {"metric", "metric name"},
      {"value", "metric value"},
  };
  if (auto it = docs.find(c); it != docs.end()) return it->second;
  if (c.find('\\') != std::string::npos) return "row label (rows \\ columns)";
  return "";
}

namespace detail {

inline bool valid_section_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("failed writing " + p.string());
}

inline std::string section_markdown(const ReportSection& s) {
  std::string md = "## " + (s.title.empty() ? s.name : s.title) + "\n\n";
  if (!s.note.empty()) md += s.note + "\n\n";
  return md + to_markdown(s.table);
}

inline std::string readme_text(const ReportBundle& b, const ReportFormats& f) {
  std::string r = "# " + b.title + "\n\n";
  if (b.sections.empty()) return r + "No sections were produced.\n";
  r += "Floats carry 6 significant digits; counts are integers; empty cells are undefined values.\n";
  for (const auto& s : b.sections) {
    r += "\n## " + s.name + "\n\n";
    if (!s.title.empty()) r += s.title + "\n\n";
    if (f.csv) r += "- `" + s.name + ".csv`\n";
    if (f.markdown) r += "- `" + s.name + ".md`\n";
    Table docs{{"column", "description"}, {}};
    for (const auto& c : s.table.columns) {
      auto it = s.column_docs.find(c);
      docs.add({c, it != s.column_docs.end() ? it->second : describe_column(c)});
    }
    r += "\n" + to_markdown(docs);
  }
  return r;
}

}  // namespace detail

// Returns the written file names relative to out_dir, sorted.
inline std::vector<std::string> emit(const ReportBundle& b, const std::filesystem::path& out_dir,
                                     const ReportFormats& formats = {}) {
  for (const auto& s : b.sections) {
    if (!detail::valid_section_name(s.name)) throw InvalidArgument("report: bad section name '" + s.name + "'");
    for (const auto& row : s.table.rows) {
      if (row.size() != s.table.columns.size()) {
        throw InvalidArgument("report: section '" + s.name + "' has a row of the wrong width");
      }
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::string> manifest;
  for (const auto& s : b.sections) {
    if (formats.csv) {
      detail::write_text(out_dir / (s.name + ".csv"), to_csv(s.table));
      manifest.push_back(s.name + ".csv");
    }
    if (formats.markdown) {
      detail::write_text(out_dir / (s.name + ".md"), detail::section_markdown(s));
      manifest.push_back(s.name + ".md");
    }
  }
  detail::write_text(out_dir / "README.md", detail::readme_text(b, formats));
  manifest.push_back("README.md");
  std::sort(manifest.begin(), manifest.end());
  return manifest;
}

}  // namespace toolcall
