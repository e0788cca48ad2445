// Drives the built `peace` binary.
#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "peace/util/files.hpp"
#include "peace/util/subprocess.hpp"

namespace peace {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kSource = PEACE_SOURCE_DIR;
const fs::path kFixtures = kSource / "tests/fixtures";

util::ProcessResult peace(std::vector<std::string> args) {
  args.insert(args.begin(), PEACE_CLI);
  util::ProcessOptions opts;
  opts.cwd = kSource;
  opts.timeout = std::chrono::minutes(2);
  return util::run_process(args, opts);
}

std::vector<std::string> with_config(std::vector<std::string> args) {
  args.insert(args.begin(), {"--config", (kFixtures / "toy_config.json").string()});
  return args;
}

TEST(Cli, PlanPrintsTheOrderedSequence) {
  auto r = peace({"plan", "--repo", "tests/fixtures/toy", "--target", "mod.f_t", "--scores",
                  "tests/fixtures/toy/scores.json"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto seq = json::parse(r.out);
  std::vector<std::string> ids;
  for (auto& e : seq["entries"]) ids.push_back(e["id"]);
  EXPECT_EQ(ids, (std::vector<std::string>{"mod.f_d", "mod.f_t", "mod.f_a", "mod.f_b"}));
}

TEST(Cli, ExitCodesByFamily) {
  EXPECT_EQ(peace({"plan"}).exit_code, 2);
  EXPECT_EQ(peace({"frobnicate"}).exit_code, 2);
  util::TempDir dir("cli");
  auto r = peace({"evaluate", "--bundle", (dir.path() / "nope").string(), "--patch", "x.json"});
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("CONFIG_INVALID"), std::string::npos) << r.err;
  EXPECT_EQ(peace({"--config", (dir.path() / "missing.json").string(), "plan", "--repo", ".", "--target", "x"})
                .exit_code,
            3);
  r = peace({"plan", "--repo", "tests/fixtures/toy", "--target", "mod.nothing", "--scores",
             "tests/fixtures/toy/scores.json"});
  EXPECT_EQ(r.exit_code, 4);
  EXPECT_NE(r.err.find("UNKNOWN_FUNCTION"), std::string::npos) << r.err;
}

TEST(Cli, OptimizeIsReproducible) {
  util::TempDir dir("cli");
  for (auto out : {"a", "b"}) {
    auto r = peace(with_config({"optimize", "--bundle", (kFixtures / "toy_bundle").string(), "--out-dir",
                                (dir.path() / out).string()}));
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }
  for (auto f : {"patch.json", "patch.diff", "report.json"})
    EXPECT_EQ(util::read_file(dir.path() / "a" / f), util::read_file(dir.path() / "b" / f)) << f;
  auto report = json::parse(util::read_file(dir.path() / "a/report.json"));
  EXPECT_EQ(report["target"], "stats.count_distinct");
  EXPECT_EQ(report["applied"], 1);
  EXPECT_NE(util::read_file(dir.path() / "a/patch.diff").find("len(set(items))"), std::string::npos);
}

TEST(Cli, AblationsComplete) {
  util::TempDir dir("cli");
  for (auto flag : {"--no-valid-edits", "--no-retrieval"}) {
    auto out = dir.path() / flag;
    auto r = peace(with_config({"optimize", "--bundle", (kFixtures / "toy_bundle").string(), "--out-dir",
                                out.string(), flag}));
    ASSERT_EQ(r.exit_code, 0) << flag << ": " << r.err;
    auto patch = json::parse(util::read_file(out / "patch.json"));
    EXPECT_EQ(patch["entries"].size(), 3u) << flag;
  }
}

TEST(Cli, EvaluateWithTheFixtureProbe) {
  util::TempDir dir("cli");
  auto r = peace(with_config({"optimize", "--bundle", (kFixtures / "toy_bundle").string(), "--out-dir",
                              (dir.path() / "o").string()}));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  util::write_file_atomic(dir.path() / "empty.json", R"({"base_revision":"toy-base","entries":[]})");
  r = peace(with_config({"evaluate", "--bundle", (kFixtures / "toy_bundle").string(), "--patch",
                         (dir.path() / "o/patch.json").string(), "--baseline-patch",
                         (dir.path() / "empty.json").string(), "--out", (dir.path() / "report.json").string(),
                         "--records-out", (dir.path() / "records.jsonl").string()}));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto report = json::parse(util::read_file(dir.path() / "report.json"));
  EXPECT_EQ(report["aggregates"]["pass_at_1"], 1.0);
  EXPECT_GT(report["aggregates"]["mean_opt_rate"].get<double>(), 0.2);
  EXPECT_TRUE(fs::exists(dir.path() / "records.jsonl"));

  // Without any baseline the opt rate is undefined.
  r = peace(with_config({"evaluate", "--bundle", (kFixtures / "toy_bundle").string(), "--patch",
                         (dir.path() / "o/patch.json").string()}));
  EXPECT_EQ(r.exit_code, 7);
  EXPECT_NE(r.err.find("MISSING_BASELINE"), std::string::npos) << r.err;
}

TEST(Cli, KnowledgeIngestAndQuery) {
  util::TempDir dir("cli");
  auto index = (dir.path() / "index.json").string();
  auto r = peace({"knowledge", "ingest", "--index", index, "--snippets", "data/external_snippets.jsonl"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = peace({"knowledge", "ingest", "--index", index, "--repo", "tests/fixtures/toy_bundle/project"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = peace({"knowledge", "query", "--index", index, "--text", "count the unique items in a list", "-k", "2",
             "--origin", "internal"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto hits = json::parse(r.out);
  ASSERT_EQ(hits.size(), 2u);
  for (auto& h : hits) EXPECT_EQ(h["origin"], "internal");
}

TEST(Cli, EditsFromAHistoryFile) {
  auto r = peace(with_config({"edits", "--repo", "tests/fixtures/toy_bundle/project", "--function",
                              "stats.count_distinct", "--history", "tests/fixtures/toy_bundle/history.json"}));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto j = json::parse(r.out);
  ASSERT_TRUE(j.contains("valid_edits")) << r.out;
  EXPECT_EQ(j["valid_edits"].size(), 1u);
}

// A scripted optimizer that breaks count_distinct: the end-of-run check
// reports it, the per-function gate reverts it.
TEST(Cli, ValidationCatchesABreakingEdit) {
  util::TempDir dir("cli");
  auto script = json::parse(util::read_file(kFixtures / "toy_bundle_script.json"));
  script["by_purpose"]["optimize:stats.count_distinct"] =
      json::array({{{"text", "```python\ndef count_distinct(items):\n    return 0\n```"}}});
  util::write_file_atomic(dir.path() / "script.json", script.dump());
  auto config = json::parse(util::read_file(kFixtures / "toy_config.json"));
  config["providers"]["chat"]["script"] = (dir.path() / "script.json").string();
  config["paths"]["external_snippets"] = (kSource / "data/external_snippets.jsonl").string();
  config["eval"]["probe_command"] = {"python3", (kFixtures / "instr_probe.py").string()};
  util::write_file_atomic(dir.path() / "config.json", config.dump());
  auto run = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args = {"--config", (dir.path() / "config.json").string(), "optimize", "--bundle",
                                     (kFixtures / "toy_bundle").string(), "--out-dir", (dir.path() / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = peace(args);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return json::parse(util::read_file(dir.path() / out / "report.json"));
  };
  auto at_end = run("end", {});
  EXPECT_EQ(at_end["validation"]["pass_at_1"], false);
  EXPECT_EQ(at_end["applied"], 1);

  auto gated = run("gated", {"--validate-per-function"});
  EXPECT_EQ(gated["validation"]["pass_at_1"], true);
  EXPECT_EQ(gated["applied"], 0);

  auto skipped = run("skipped", {"--no-validate"});
  EXPECT_TRUE(skipped["validation"].is_null());
}

}  // namespace
}  // namespace peace
