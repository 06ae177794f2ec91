#pragma once

// Plain tabular data with locale-independent rendering to CSV and Markdown.
// Reals print with 6 significant digits, counts as integers.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace toolcall {

using Cell = std::variant<std::monostate, std::string, std::int64_t, double>;

inline Cell count_cell(std::size_t v) { return static_cast<std::int64_t>(v); }

inline Cell real_cell(std::optional<double> v) {
  return v ? Cell(*v) : Cell(std::monostate{});
}

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  if (ec != std::errc{}) return "?";
  return std::string(buf, end);
}

inline std::string format_cell(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_real(v); }
  };
  return std::visit(Visitor{}, c);
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  Table& add(std::vector<Cell> row) {
    rows.push_back(std::move(row));
    return *this;
  }
};

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string to_csv(const Table& t) {
  std::string out;
  auto emit_row = [&out](const auto& cells, auto&& fmt) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(fmt(cells[i]));
    }
    out += '\n';
  };
  emit_row(t.columns, [](const std::string& s) { return s; });
  for (const auto& r : t.rows) emit_row(r, [](const Cell& c) { return format_cell(c); });
  return out;
}

inline std::string to_markdown(const Table& t) {
  auto esc = [](std::string s) {
    std::string out;
    for (char c : s) {
      if (c == '|') out += '\\';
      if (c == '\n') {
        out += ' ';
        continue;
      }
      out += c;
    }
    return out;
  };
  std::string out = "|";
  for (const auto& c : t.columns) out += " " + esc(c) + " |";
  out += "\n|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += "---|";
  out += '\n';
  for (const auto& r : t.rows) {
    out += "|";
    for (const auto& c : r) out += " " + esc(format_cell(c)) + " |";
    out += '\n';
  }
  return out;
}

}  // namespace toolcall
