#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "test_support.hpp"
#include "toolcall/affordability.hpp"
#include "toolcall/policy.hpp"
#include "toolcall/report.hpp"

using namespace toolcall;
using toolcall::testkit::read_file;

namespace {

const std::filesystem::path kData = TOOLCALL_TEST_DATA;

ReportBundle two_policy_bundle() {
  TraceSet ts;
  ts.records.push_back(testkit::make_record("a", 0, 0.2, 0.9));
  ts.records.push_back(testkit::make_record("b", 1, 0.8, 0.5));
  ReportBundle b;
  b.add({"policies", "Policy outcomes",
         to_table({evaluate_policy(ts, NoToolPolicy{}), evaluate_policy(ts, OraclePolicy{})}), "", {}});
  return b;
}

std::vector<std::vector<std::string>> csv_cells(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::vector<std::vector<std::string>> markdown_cells(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] != '|' || line.rfind("|---", 0) == 0) continue;
    std::vector<std::string> cells;
    std::size_t pos = 1;
    while (pos < line.size()) {
      const auto next = line.find(" |", pos);
      std::string c = line.substr(pos, next - pos);
      if (!c.empty() && c.front() == ' ') c.erase(0, 1);
      cells.push_back(c);
      pos = next + 2;
    }
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Report, EmptyBundleWritesReadmeOnly) {
  testkit::TempDir dir;
  const auto manifest = emit(ReportBundle{}, dir.path());
  EXPECT_EQ(manifest, (std::vector<std::string>{"README.md"}));
  EXPECT_EQ(read_file(dir / "README.md"), "# Report\n\nNo sections were produced.\n");
}

TEST(Report, TwoPolicyFixtureMatchesGolden) {
  testkit::TempDir dir;
  const auto manifest = emit(two_policy_bundle(), dir.path());
  EXPECT_EQ(manifest, (std::vector<std::string>{"README.md", "policies.csv", "policies.md"}));
  for (const auto& f : manifest) EXPECT_EQ(read_file(dir / f), read_file(kData / "report_two_policies" / f)) << f;
}

TEST(Report, RerunIsByteIdentical) {
  testkit::TempDir a, b;
  std::mt19937_64 gen(5);
  const auto ts = testkit::dyadic_trace(60, gen);
  ReportBundle bundle;
  bundle.add({"curve", "Gain", to_table(gain_curve(ts, oracle_selector(ts),
                                                   cost_levels_for_coverage(kDefaultBudget, 60, {10, 50, 100}))),
              "note", {}});
  bundle.add({"pol", "", to_table({evaluate_policy(ts, SelfDecisionPolicy{})}), "", {}});
  const auto ma = emit(bundle, a.path());
  const auto mb = emit(bundle, b.path());
  ASSERT_EQ(ma, mb);
  for (const auto& f : ma) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  emit(bundle, a.path());
  for (const auto& f : ma) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
}

TEST(Report, MarkdownCellsEqualCsvCells) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  Table t{{"name", "x", "n", "maybe"}, {}};
  for (int i = 0; i < 200; ++i) {
    t.add({"row" + std::to_string(i), u(gen) / std::pow(10.0, i % 12), static_cast<std::int64_t>(gen() % 100000),
           i % 3 ? Cell(u(gen)) : Cell(std::monostate{})});
  }
  testkit::TempDir dir;
  ReportBundle b;
  b.add({"t", "T", t, "", {}});
  emit(b, dir.path());
  const auto csv = csv_cells(read_file(dir / "t.csv"));
  const auto md = markdown_cells(read_file(dir / "t.md"));
  ASSERT_EQ(csv.size(), md.size());
  for (std::size_t r = 0; r < csv.size(); ++r) EXPECT_EQ(csv[r], md[r]) << r;
}

TEST(Report, NumberFormatting) {
  EXPECT_EQ(format_real(0.1 + 0.2), "0.3");
  EXPECT_EQ(format_real(1234567.0), "1.23457e+06");
  EXPECT_EQ(format_real(-0.0), "0");
  EXPECT_EQ(format_cell(count_cell(500)), "500");
  EXPECT_EQ(format_cell(real_cell(std::nullopt)), "");
  EXPECT_EQ(csv_escape("a,\"b\""), "\"a,\"\"b\"\"\"");
}

TEST(Report, RejectsBadSections) {
  testkit::TempDir dir;
  ReportBundle b;
  b.add({"ok", "", Table{{"a"}, {}}, "", {}});
  EXPECT_THROW(b.add({"ok", "", Table{{"a"}, {}}, "", {}}), InvalidArgument);
  ReportBundle bad;
  bad.add({"Bad Name", "", Table{{"a"}, {}}, "", {}});
  EXPECT_THROW(emit(bad, dir.path()), InvalidArgument);
  ReportBundle ragged;
  ragged.add({"r", "", Table{{"a", "b"}, {{Cell(std::int64_t{1})}}}, "", {}});
  EXPECT_THROW(emit(ragged, dir.path()), InvalidArgument);
}

TEST(Report, UnwritableDirectoryFails) {
  testkit::TempDir dir;
  testkit::write_file(dir / "file", "x");
  EXPECT_THROW(emit(two_policy_bundle(), dir / "file" / "sub"), Error);
}

TEST(Report, FormatSelection) {
  testkit::TempDir dir;
  const auto m = emit(two_policy_bundle(), dir.path(), {true, false});
  EXPECT_EQ(m, (std::vector<std::string>{"README.md", "policies.csv"}));
  EXPECT_EQ(read_file(dir / "README.md").find("policies.md"), std::string::npos);
}

TEST(Report, ColumnDocsOverride) {
  testkit::TempDir dir;
  ReportBundle b;
  b.add({"x", "", Table{{"score", "odd"}, {}}, "", {{"odd", "custom text"}}});
  emit(b, dir.path());
  const auto readme = read_file(dir / "README.md");
  EXPECT_NE(readme.find("| odd | custom text |"), std::string::npos);
  EXPECT_NE(readme.find("| score | mean factuality score"), std::string::npos);
}
