// Runs the fixture probe through SubprocessProbe. Any probe honoring the same
// command line and one-line record should pass these.
#include <gtest/gtest.h>

#include "peace/error.hpp"
#include "peace/eval_harness.hpp"
#include "peace/util/files.hpp"
#include "peace/util/subprocess.hpp"

namespace peace {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = fs::path(PEACE_SOURCE_DIR) / "tests/fixtures";

SubprocessProbe fixture_probe() { return SubprocessProbe({"python3", (kFixtures / "instr_probe.py").string()}); }

ProbeResult run_script(const fs::path& dir, const std::string& source, std::size_t repeats = 1) {
  util::write_file_atomic(dir / "script.py", source);
  ProbeRequest req;
  req.command = {"python3", "script.py"};
  req.workdir = dir;
  req.repeats = repeats;
  auto probe = fixture_probe();
  return probe.measure(req);
}

std::string loop_script(int n) {
  return "total = 0\nfor i in range(" + std::to_string(n) + "):\n    total += i * i\n";
}

TEST(ProbeInterface, RepeatsAreDeterministic) {
  util::TempDir dir("probe");
  auto r = run_script(dir.path(), loop_script(200), 5);
  ASSERT_EQ(r.counts.size(), 5u);
  for (auto c : r.counts) EXPECT_EQ(c, r.counts[0]);
  EXPECT_GT(r.counts[0], 0u);
  EXPECT_EQ(*r.exit_status, 0);
  EXPECT_FALSE(r.error);
}

TEST(ProbeInterface, CountsGrowWithWorkAndAreAffineInLoopLength) {
  util::TempDir dir("probe");
  std::vector<std::uint64_t> c;
  for (int n : {10, 20, 30}) c.push_back(run_script(dir.path(), loop_script(n)).counts.at(0));
  EXPECT_LT(c[0], c[1]);
  EXPECT_LT(c[1], c[2]);
  // Every iteration executes the same bytecode.
  EXPECT_EQ(c[1] - c[0], c[2] - c[1]);
}

TEST(ProbeInterface, ExitCodeMirrorsScriptStatus) {
  util::TempDir dir("probe");
  EXPECT_EQ(*run_script(dir.path(), "import sys\nsys.exit(3)\n").exit_status, 3);
  EXPECT_EQ(*run_script(dir.path(), "raise ValueError('x')\n").exit_status, 1);
}

TEST(ProbeInterface, VerdictsAgreeWithPytest) {
  for (int fixture = 0; fixture < 10; ++fixture) {
    util::TempDir dir("probe");
    int n = 1 + fixture % 4, failing = fixture % 3 == 0 ? 0 : fixture % n;
    std::string src;
    for (int t = 0; t < n; ++t)
      src += "def test_" + std::to_string(t) + "():\n    assert sum(range(" + std::to_string(t + 5) + ")) " +
             (t < failing ? "< 0" : ">= 0") + "\n\n";
    util::write_file_atomic(dir.path() / "test_f.py", src);

    util::ProcessOptions opts;
    opts.cwd = dir.path();
    auto direct = util::run_process({"python3", "-m", "pytest", "-q", "-p", "no:cacheprovider"}, opts);

    ProbeRequest req;
    req.command = {"python3", "-m", "pytest", "-q"};
    req.workdir = dir.path();
    auto probe = fixture_probe();
    auto r = probe.measure(req);
    EXPECT_EQ(*r.exit_status, direct.exit_code) << "fixture " << fixture;
    ASSERT_TRUE(r.verdicts);
    EXPECT_EQ(r.verdicts->size(), std::size_t(n));
    int failed = 0;
    for (auto& [node, v] : *r.verdicts) failed += v == "failed";
    EXPECT_EQ(failed, failing) << "fixture " << fixture;
  }
}

TEST(ProbeInterface, ErrorsAreReported) {
  util::TempDir dir("probe");
  auto probe = fixture_probe();
  ProbeRequest req;
  req.workdir = dir.path();
  req.command = {"python3", "missing.py"};
  EXPECT_EQ(*probe.measure(req).error, "COMMAND_NOT_FOUND");
  req.command = {"python3", "-c", "pass"};
  req.backend = Backend::Hardware;
  EXPECT_EQ(*probe.measure(req).error, "BACKEND_UNAVAILABLE");
}

TEST(ProbeInterface, ToyBundleVariants) {
  auto probe = fixture_probe();
  EvalConfig cfg;
  cfg.sandbox = SandboxMode::Local;
  auto bundle = kFixtures / "toy_bundle";
  auto base = run_task(bundle, Variant::Baseline, nullptr, probe, cfg);
  auto gt = run_task(bundle, Variant::GroundTruth, nullptr, probe, cfg);
  EXPECT_TRUE(base.outcome.pass_at_1);
  EXPECT_TRUE(gt.outcome.pass_at_1);
  EXPECT_LT(gt.measurement->instruction_count, base.measurement->instruction_count);

  auto files = read_python_files(bundle / TaskBundle::kProject);
  ProjectPatch broken;
  auto before = corpus_from_files(files).find_function("stats.count_distinct")->body;
  broken.entries.push_back({"stats.count_distinct", "stats.py", before, "def count_distinct(items):\n    return 0"});
  auto run = run_task(bundle, Variant::Method, &broken, probe, cfg);
  EXPECT_FALSE(run.outcome.pass_at_1);
  auto report = aggregate({*base.measurement, *run.measurement}, {run.outcome});
  EXPECT_EQ(report.excluded.size(), 1u);
}

}  // namespace
}  // namespace peace
