#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "owsg/harness.hpp"

using namespace owsg;

namespace {

ExperimentConfig quick(const std::string& name, std::uint64_t seed = 42) {
  ExperimentConfig c;
  c.name = name;
  c.seed = seed;
  c.timing = false;
  return c;
}

}  // namespace

TEST(Harness, SameSeedSameBytes) {
  auto a = quick("check fvdg"), b = quick("check fvdg");
  EXPECT_EQ(to_csv(run(a)), to_csv(run(b)));
  auto s1 = quick("qds game"), s2 = quick("qds game", 43);
  s1.params["trials"] = s2.params["trials"] = 500;
  EXPECT_NE(to_csv(run(s1)), to_csv(run(s2)));
}

TEST(Harness, EmptySuite) {
  const auto r = suite({}, quick(""));
  EXPECT_TRUE(r.rows.empty());
  EXPECT_TRUE(r.all_pass);
  EXPECT_EQ(to_csv(r.rows), std::string(kCsvHeader) + "\n");
}

TEST(Harness, PlantedNegativeFails) {
  const auto rows = run(quick("check negative"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].pass);
  EXPECT_FALSE(suite({"check pgm", "check negative"}, quick("")).all_pass);
}

TEST(Harness, SuiteRowsAreConcatenation) {
  const std::vector<std::string> names{"check twirl", "qpotp wrong-msg", "check pgm"};
  const auto s = suite(names, quick("", 9));
  std::size_t total = 0;
  for (std::size_t i = 0; i < names.size(); ++i) total += run(quick(names[i], 9 ^ i)).size();
  EXPECT_EQ(s.rows.size(), total);
  for (const auto& r : s.rows) {
    EXPECT_EQ(r.pass, recompute_pass(r)) << r.metric;
    const auto p = nlohmann::json::parse(r.param_json);
    EXPECT_TRUE(p.contains("seed"));
    EXPECT_EQ(p.at("cap"), 4096);
    EXPECT_EQ(r.ms, 0.0);
  }
}

TEST(Harness, RecomputePass) {
  EXPECT_TRUE(recompute_pass("<=", 1.0, 1.0, 0.0));
  EXPECT_FALSE(recompute_pass("<=", 1.1, 1.0, 0.05));
  EXPECT_TRUE(recompute_pass(">=", 0.96, 1.0, 0.05));
  EXPECT_FALSE(recompute_pass(">", 1.0, 1.0, 1.0));
  EXPECT_TRUE(recompute_pass("~", 0.52, 0.5, 0.03));
  EXPECT_FALSE(recompute_pass("~", 0.46, 0.5, 0.03));
  EXPECT_FALSE(recompute_pass("<=", std::nan(""), 1.0, 1.0));
  EXPECT_TRUE(recompute_pass("info", -5.0, 0.0, 0.0));
  EXPECT_THROW(recompute_pass("==", 0.0, 0.0, 0.0), UsageError);
}

TEST(Harness, UnknownExperiment) {
  EXPECT_THROW(run(quick("check nothing")), UsageError);
  EXPECT_THROW(suite({"check pgm", "bogus"}, quick("")), UsageError);
}

TEST(Harness, BadParameter) {
  auto c = quick("qds game");
  c.params["trials"] = "many";
  EXPECT_THROW(run(c), UsageError);
  c.params["trials"] = "2.5";
  EXPECT_THROW(run(c), UsageError);
}

TEST(Harness, CapIsEnforcedAndRestored) {
  auto c = quick("qpotp efi");
  c.cap = 4;
  EXPECT_THROW(run(c), SizingError);
  EXPECT_EQ(dimension_cap(), 4096u);
}

TEST(Harness, ConfigText) {
  const auto p = parse_config_text("# header\ntrials = 100\n  K=3  # inline\n\nname = a b\n");
  EXPECT_EQ(p.at("trials"), "100");
  EXPECT_EQ(p.at("K"), "3");
  EXPECT_EQ(p.at("name"), "a b");
  EXPECT_THROW(parse_config_text("novalue\n"), UsageError);
  EXPECT_THROW(parse_config_text(" = 3\n"), UsageError);
  ExperimentConfig c;
  c.params = p;
  EXPECT_EQ(c.count("trials", 1), 100u);
  EXPECT_EQ(c.count("absent", 7), 7u);
}

TEST(Harness, CsvQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
  ReportRow r;
  r.experiment = "e";
  r.param_json = R"({"k":1})";
  r.metric = "m";
  r.value = 0.1;
  r.comparator = "<=";
  r.tol = 1e-9;
  const auto csv = to_csv({r});
  EXPECT_NE(csv.find(R"("{""k"":1}")"), std::string::npos);
  EXPECT_NE(csv.find("0.10000000000000001"), std::string::npos);
  EXPECT_NE(csv.find("<=+1.0000000000000001e-09"), std::string::npos);
  EXPECT_EQ(to_json({r})[0].at("params").at("k"), 1);
}

TEST(Harness, AppendWritesHeaderOnce) {
  const std::string path = ::testing::TempDir() + "owsg_harness_append.csv";
  std::remove(path.c_str());
  const auto rows = run(quick("check negative"));
  append_report(path, rows);
  append_report(path, rows);
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  EXPECT_EQ(text.find(kCsvHeader), 0u);
  EXPECT_EQ(text.find(kCsvHeader, 1), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  std::remove(path.c_str());
}
