#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"
#include "toolcall/cli.hpp"

using namespace toolcall;
using toolcall::testkit::read_file;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "toolcall");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path table1_trace(const testkit::TempDir& dir) {
  const auto r = run_cli({"synth", "--preset", "table1", "--out", dir.path().string()});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "trace.jsonl";
}

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
  return files;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"simulate", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"validate"}).code, 2);
  EXPECT_EQ(run_cli({"simulate", "--bogus", "1"}).code, 2);
  EXPECT_EQ(run_cli({"simulate", "--policy", "nonsense", "--trace", "x", "--out", "y"}).code, 2);
  EXPECT_EQ(run_cli({"label", "--trace", "x", "--out", "y", "--low-hi", "0.95"}).code, 2);
  EXPECT_EQ(run_cli({"synth", "--out", "y"}).code, 2);
}

TEST(Cli, ValidateCleanAndCorrupt) {
  testkit::TempDir dir;
  const auto trace = table1_trace(dir);
  const auto ok = run_cli({"validate", "--trace", trace.string()});
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out, "ok: 500 records\n");

  auto text = read_file(trace);
  const auto pos = text.find("\"s_no_tool\":");
  ASSERT_NE(pos, std::string::npos);
  const auto end = text.find_first_of(",}", pos);
  text.replace(pos, end - pos, "\"s_no_tool\":1.3");
  testkit::write_file(dir / "bad.jsonl", text);
  const auto bad = run_cli({"validate", "--trace", (dir / "bad.jsonl").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("s_no_tool"), std::string::npos);

  testkit::write_file(dir / "garbage.jsonl", "{not json\n");
  EXPECT_EQ(run_cli({"validate", "--trace", (dir / "garbage.jsonl").string()}).code, 1);
}

TEST(Cli, MissingTraceIsDataError) {
  testkit::TempDir dir;
  const auto r = run_cli({"label", "--trace", (dir / "none.jsonl").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, SimulateOracleOnTableOneFixture) {
  testkit::TempDir dir;
  const auto trace = table1_trace(dir);
  const auto r = run_cli({"simulate", "--trace", trace.string(), "--out", (dir / "sim").string(), "--policy", "oracle"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| oracle |"), std::string::npos);
  EXPECT_NE(r.out.find("0.83 (300)"), std::string::npos);
  EXPECT_NE(read_file(dir / "sim" / "policies.csv").find("oracle,"), std::string::npos);
}

TEST(Cli, SimulateDefaultPolicies) {
  testkit::TempDir dir;
  const auto trace = table1_trace(dir);
  const auto r = run_cli({"simulate", "--trace", trace.string(), "--out", (dir / "sim").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"0.61 (0)", "0.78 (500)", "(152)", "0.83 (300)"}) EXPECT_NE(r.out.find(s), std::string::npos) << s;
  EXPECT_EQ(run_cli({"simulate", "--trace", trace.string(), "--out", (dir / "x").string(), "--policy",
                     "estimator-threshold"})
                .code,
            2);
}

TEST(Cli, AlignNeedsVariant) {
  testkit::TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--preset", "fig3", "--out", dir.path().string()}).code, 0);
  const auto trace = dir / "trace.jsonl";
  EXPECT_EQ(run_cli({"align", "--trace", trace.string(), "--out", (dir / "a").string()}).code, 2);
  const auto r = run_cli({"align", "--trace", trace.string(), "--out", (dir / "a").string(), "--variant", "v1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "venn.csv"));

  const auto no_answers = table1_trace(dir);
  EXPECT_EQ(run_cli({"align", "--trace", no_answers.string(), "--out", (dir / "b").string(), "--variant", "v1"}).code, 1);
}

TEST(Cli, LabelAndAffordWriteSections) {
  testkit::TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--preset", "fig3", "--out", dir.path().string()}).code, 0);
  const auto trace = (dir / "trace.jsonl").string();
  ASSERT_EQ(run_cli({"label", "--trace", trace, "--out", (dir / "l").string()}).code, 0);
  EXPECT_EQ(read_file(dir / "l" / "bucket_matrix.csv"),
            "no_tool\\always_tool,Low,Mid,High\nLow,60,40,30\nMid,2,109,107\nHigh,4,48,152\n");
  const auto a = run_cli({"afford", "--trace", trace, "--out", (dir / "a").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* f : {"gain_oracle.csv", "gain_self.csv", "budget_accounting.csv", "README.md"})
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / f)) << f;
}

TEST(Cli, ConfigFilePrecedence) {
  testkit::TempDir dir;
  testkit::write_file(dir / "c.json", R"({"eps": 0.25, "tau": 0.3, "folds": 3, "policies": ["oracle"]})");
  CLI::App app;
  cli::detail::Flags f;
  cli::detail::add_flags(&app, f, {"config", "eps", "tau", "k", "policy"});
  const std::string cfg = (dir / "c.json").string();
  const char* argv[] = {"x", "--config", cfg.c_str(), "--eps", "0.125"};
  app.parse(5, argv);
  const auto c = cli::detail::resolve_config(f);
  EXPECT_EQ(c.eps, 0.125);
  EXPECT_EQ(c.tau, 0.3);
  EXPECT_EQ(c.folds, 3u);
  EXPECT_EQ(c.policies, (std::vector<std::string>{"oracle"}));
  EXPECT_EQ(c.seed, 42u);

  testkit::write_file(dir / "bad.json", R"({"tua": 0.3})");
  EXPECT_EQ(run_cli({"label", "--config", (dir / "bad.json").string()}).code, 2);
}

TEST(Cli, TrainWritesBundleDeterministically) {
  testkit::TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--preset", "separable", "--out", (dir / "fx").string(), "--layers", "2",
                     "--signal-layer", "1"})
                .code,
            0);
  testkit::write_file(dir / "c.json", R"({"folds": 3, "grid": [{"hidden_layers": [], "learning_rate": 0.01}]})");
  auto train = [&](const std::string& out) {
    return run_cli({"train", "--config", (dir / "c.json").string(), "--trace", (dir / "fx" / "trace.jsonl").string(),
                    "--out", (dir / out).string()});
  };
  const auto a = train("t1");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(train("t2").code, 0);
  EXPECT_EQ(tree(dir / "t1"), tree(dir / "t2"));
  EXPECT_NE(read_file(dir / "t1" / "layer_search.csv").find("1,"), std::string::npos);
  const auto bundle = load_bundle(dir / "t1" / "bundle.teb1");
  EXPECT_EQ(bundle.layer, 1);

  const auto s = run_cli({"simulate", "--trace", (dir / "fx" / "trace.jsonl").string(), "--bundle",
                          (dir / "t1" / "bundle.teb1").string(), "--cost", "100", "--out", (dir / "s").string()});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("estimator-budget(100)"), std::string::npos);
  EXPECT_NE(s.out.find("estimator-threshold(0.5)"), std::string::npos);
}
