// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any
// primary criterion fails. Probe checks are reported as NOTE lines only.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "peace/bench_builder.hpp"
#include "peace/commands.hpp"
#include "peace/edit_agent.hpp"
#include "peace/error.hpp"
#include "peace/eval_harness.hpp"
#include "peace/util/files.hpp"
#include "peace/util/subprocess.hpp"

namespace fs = std::filesystem;
using namespace peace;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kSource = PEACE_SOURCE_DIR;
const fs::path kFixtures = kSource / "tests/fixtures";

struct Check {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Fixed-score plan on the four-caller toy repo, through the CLI.
Check plan_fixture() {
  auto t0 = Clock::now();
  util::ProcessOptions opts;
  opts.cwd = kSource;
  auto r = util::run_process({PEACE_CLI, "plan", "--repo", "tests/fixtures/toy", "--target", "mod.f_t", "--scores",
                              "tests/fixtures/toy/scores.json", "--threshold", "0.5"},
                             opts);
  double secs = seconds_since(t0);
  if (r.exit_code != 0) return {false, "exit " + std::to_string(r.exit_code) + ": " + r.err};
  std::vector<std::string> ids;
  auto seq = nlohmann::json::parse(r.out);
  for (auto& e : seq["entries"]) ids.push_back(e["id"]);
  const std::vector<std::string> want = {"mod.f_d", "mod.f_t", "mod.f_a", "mod.f_b"};
  std::ostringstream d;
  d << "sequence=";
  for (auto& id : ids) d << id << (id == ids.back() ? "" : ",");
  d << " runtime=" << secs << "s";
  bool excludes_c = std::find(ids.begin(), ids.end(), "mod.f_c") == ids.end();
  return {ids == want && excludes_c && secs < 1.0, d.str()};
}

RankedEdits ranked_edits(std::size_t n) {
  RankedEdits out;
  for (std::size_t i = 0; i < n; ++i) {
    EditRecord e{"c" + std::to_string(i), "m.py", "m.f" + std::to_string(i),
                 "def f():\n    return " + std::to_string(i), "def f():\n    return " + std::to_string(i + 1),
                 "edit " + std::to_string(i)};
    out.push_back({e, RelevanceScore::uniform(1.0 - 0.01 * static_cast<double>(i))});
  }
  return out;
}

nlohmann::json tool_call(long i, long j) {
  return {{"tool_call", {{"name", kFragmentsTool}, {"arguments", {{"i", i}, {"j", j}}}}}};
}

nlohmann::json selection(const std::vector<long>& indices) {
  nlohmann::json list = nlohmann::json::array();
  for (auto i : indices) list.push_back({{"index", i}, {"rationale", "scripted"}});
  return {{"text", nlohmann::json{{"valid_edits", list}}.dump()}};
}

Check agent_soundness() {
  auto corpus = make_corpus({{"t.py", "def target(xs):\n    return sorted(xs)[0]\n"}});
  const auto& fn = *corpus.find_function("t.target");
  AgentConfig cfg;
  cfg.retry.base_backoff = std::chrono::milliseconds(0);

  ScriptedProvider adversary;
  adversary.add_keyed("agent", {tool_call(1, 2)}, true);
  auto stuck = identify_valid_edits(fn, ranked_edits(40), adversary, cfg);
  int adversarial_calls = stuck.transcript.tool_calls;

  std::mt19937 rng(20240);
  int fabrications = 0, completed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto ranked = ranked_edits(rng() % 25);
    std::vector<nlohmann::json> script;
    for (int k = 0, calls = int(rng() % 14); k < calls; ++k) {
      long i = long(rng() % 30) - 2;
      script.push_back(tool_call(i, i + long(rng() % 12) - 2));
    }
    std::vector<long> picks;
    for (int k = 0, m = int(rng() % 8); k < m; ++k) picks.push_back(long(rng() % 35) - 3);
    script.push_back(selection(picks));
    script.push_back(selection(picks));
    ScriptedProvider model(script);
    AgentResult result;
    try {
      result = identify_valid_edits(fn, ranked, model, cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ScriptExhausted) throw;
      continue;
    }
    ++completed;
    std::set<std::size_t> seen;
    for (auto& sel : result.valid.edits) {
      bool member = sel.index >= 1 && sel.index <= ranked.size() && ranked[sel.index - 1].edit == sel.edit &&
                    seen.insert(sel.index).second;
      if (!member) ++fabrications;
    }
  }
  std::ostringstream d;
  d << "adversarial_tool_calls=" << adversarial_calls << " transcripts=" << completed
    << "/100 fabrications=" << fabrications;
  return {adversarial_calls == 10 && fabrications == 0 && completed == 100, d.str()};
}

Check metric_oracle() {
  std::mt19937_64 rng(1000);
  std::uniform_int_distribution<std::uint64_t> count(1, 10'000'000'000ULL);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    auto a = count(rng), b = count(rng);
    long double la = a, lb = b;
    worst = std::max(worst, std::abs(opt_rate(double(a), double(b)) - double((la - lb) / la)));
    worst = std::max(worst, std::abs(speedup(double(a), double(b)) - double(la / lb)));
  }
  bool identities = true;
  for (double v : {1.0, 3.0, 1000.0, 987654321.0})
    identities = identities && opt_rate(v, v) == 0.0 && speedup(v, v) == 1.0;
  bool spots = opt_rate(1000, 531) == 0.469 && speedup(840, 1000) == 0.840;
  std::ostringstream d;
  d << "max_abs_err=" << worst << " identities=" << (identities ? "exact" : "broken")
    << " spot_values=" << (spots ? "exact" : "off");
  return {worst <= 1e-12 && identities && spots, d.str()};
}

Check bench_chain() {
  const std::vector<std::string> keyword_phrases = {"optimized", "faster", "speedup", "reduce latency",
                                                    "caching",   "slower", "memoize", "vectorized"};
  const std::vector<std::string> plain = {"fix",    "typo", "refactor", "docs", "rename",  "update",
                                          "readme", "add",  "tests",    "bump", "version", "logging"};
  // The six size boundaries come first, each with a keyword and a relevant verdict.
  const std::vector<std::pair<std::size_t, std::size_t>> boundaries = {{4, 1}, {5, 1}, {150, 1},
                                                                       {151, 1}, {40, 4}, {40, 5}};
  std::mt19937 rng(50);
  std::vector<CommitRecord> commits;
  std::set<std::string> kw, fits, relevant, garbled;
  ScriptedProvider model;
  for (int i = 0; i < 50; ++i) {
    CommitRecord c;
    c.sha = "b" + std::to_string(1000 + i);
    c.parents = {"p" + c.sha};
    c.message = plain[rng() % plain.size()] + " " + plain[rng() % plain.size()];
    bool boundary = i < int(boundaries.size());
    if (boundary || rng() % 2) {
      c.message += " " + keyword_phrases[rng() % keyword_phrases.size()];
      kw.insert(c.sha);
    }
    if (boundary) {
      std::tie(c.lines_changed, c.files_changed) = boundaries[i];
    } else {
      c.lines_changed = std::vector<std::size_t>{4, 5, 40, 150, 151, 12, 3, 99}[rng() % 8];
      c.files_changed = 1 + rng() % 5;
    }
    if (c.lines_changed >= 5 && c.lines_changed <= 150 && c.files_changed <= 4) fits.insert(c.sha);
    bool rel = boundary || rng() % 3 != 0;
    if (!boundary && i % 11 == 0) {
      garbled.insert(c.sha);
      model.add_keyed("confirm:" + c.sha, {{{"text", "unsure"}}});
    } else {
      nlohmann::json v = {{"verdict", rel ? "relevant" : "irrelevant"}, {"score", rel ? 0.9 : 0.1}};
      model.add_keyed("confirm:" + c.sha, {{{"text", v.dump()}}});
      if (rel) relevant.insert(c.sha);
    }
    commits.push_back(c);
  }
  FilterReport report;
  auto kept = run_filter_chain(commits, FilterConfig{}, model, report, RetryPolicy{0, std::chrono::milliseconds(0)});
  std::vector<std::string> want, review, got;
  for (auto& c : commits) {
    if (!kw.count(c.sha) || !fits.count(c.sha)) continue;
    if (garbled.count(c.sha)) review.push_back(c.sha);
    else if (relevant.count(c.sha)) want.push_back(c.sha);
  }
  for (auto& c : kept) got.push_back(c.sha);
  // Boundary expectations: 5 and 150 lines, and 4 files, are kept.
  std::vector<bool> boundary_kept, boundary_want = {false, true, true, false, true, false};
  for (std::size_t i = 0; i < boundaries.size(); ++i)
    boundary_kept.push_back(std::find(got.begin(), got.end(), commits[i].sha) != got.end());
  std::ostringstream d;
  d << "kept=" << got.size() << "/50 expected=" << want.size() << " needs_review=" << report.needs_review.size()
    << " boundaries=" << (boundary_kept == boundary_want ? "ok" : "wrong");
  return {got == want && report.needs_review == review && boundary_kept == boundary_want, d.str()};
}

// Parses every file with the Python interpreter's own parser.
std::optional<std::string> python_parse_error(const FileMap& files) {
  util::TempDir dir("parse");
  std::vector<std::string> argv = {"python3", "-c",
                                   "import ast, sys\nfor p in sys.argv[1:]:\n    ast.parse(open(p).read(), p)\n"};
  for (auto& [path, content] : files) {
    util::write_file_atomic(dir.path() / path, content);
    argv.push_back((dir.path() / path).string());
  }
  auto r = util::run_process(argv);
  if (r.exit_code == 0) return std::nullopt;
  return r.err.empty() ? "python3 exit " + std::to_string(r.exit_code) : r.err;
}

struct EndToEnd {
  bool ok = false;
  std::string detail;
  double opt_rate = 0;
};

EndToEnd end_to_end(bool use_valid_edits, bool use_retrieval) {
  auto t0 = Clock::now();
  EndToEnd out;
  std::ostringstream d;
  try {
    auto cfg = PipelineConfig::load(kFixtures / "toy_config.json");
    cfg.use_valid_edits = use_valid_edits;
    cfg.use_retrieval = use_retrieval;
    Session session(cfg);
    auto bundle = kFixtures / "toy_bundle";
    int checked = 0;
    std::vector<std::string> parse_failures;
    auto original = read_python_files(bundle / TaskBundle::kProject);
    if (auto err = python_parse_error(original)) parse_failures.push_back("original: " + *err);
    // Observes each applied edit; never rejects, so a failure here is not hidden by a revert.
    StepGate observe = [&](const FileMap& files) -> std::optional<std::string> {
      ++checked;
      if (auto err = python_parse_error(files)) parse_failures.push_back(*err);
      return std::nullopt;
    };
    auto result = optimize_bundle(session, bundle, std::nullopt, observe);
    if (auto err = python_parse_error(result.run.files)) parse_failures.push_back("final: " + *err);
    bool steps_parse = parse_failures.empty();
    for (auto& s : result.run.report.steps) steps_parse = steps_parse && s.parseable;

    auto probe = make_probe(cfg);
    auto base = run_task(bundle, Variant::Baseline, nullptr, *probe, cfg.eval);
    auto method = run_task(bundle, Variant::Method, &result.run.patch, *probe, cfg.eval);
    bool tests_pass = method.outcome.pass_at_1;
    double rate = 0;
    if (base.measurement && method.measurement)
      rate = opt_rate(double(base.measurement->instruction_count), double(method.measurement->instruction_count));
    double secs = seconds_since(t0);
    out.opt_rate = rate;
    d << "steps=" << result.run.report.steps.size() << " applied_checked=" << checked
      << " parseable=" << (steps_parse ? "yes" : "no") << " tests=" << (tests_pass ? "pass" : "fail")
      << " baseline=" << (base.measurement ? base.measurement->instruction_count : 0)
      << " method=" << (method.measurement ? method.measurement->instruction_count : 0) << " opt_rate=" << rate
      << " runtime=" << secs << "s";
    for (auto& f : parse_failures) d << " parse_error=" << f;
    out.ok = steps_parse && tests_pass && base.outcome.pass_at_1 && rate >= 0.2 && secs < 60;
  } catch (const std::exception& e) {
    d << "error: " << e.what();
  }
  out.detail = d.str();
  return out;
}

Check ablations() {
  auto no_edits = end_to_end(false, true);
  auto no_retrieval = end_to_end(true, false);
  // Completion is required; a lower rate than the full run is acceptable.
  bool ok = no_edits.ok && no_retrieval.ok;
  return {ok, "without_edits{" + no_edits.detail + "} without_retrieval{" + no_retrieval.detail + "}"};
}

std::string probe_note() {
  SubprocessProbe probe({"python3", (kFixtures / "instr_probe.py").string()});
  util::TempDir dir("probe");
  auto count = [&](int n, std::size_t repeats) {
    util::write_file_atomic(dir.path() / "loop.py",
                            "t = 0\nfor i in range(" + std::to_string(n) + "):\n    t += i\n");
    ProbeRequest req;
    req.command = {"python3", "loop.py"};
    req.workdir = dir.path();
    req.repeats = repeats;
    return probe.measure(req).counts;
  };
  try {
    auto five = count(50, 5);
    std::set<std::uint64_t> unique(five.begin(), five.end());
    auto c10 = count(10, 1).at(0), c20 = count(20, 1).at(0);
    std::ostringstream d;
    d << "fixture trace probe: unique_counts_over_5=" << unique.size() << " loop10=" << c10 << " loop20=" << c20
      << (unique.size() == 1 && c20 > c10 ? " (deterministic, monotone)" : " (UNEXPECTED)")
      << "; verdict agreement is covered by probe_interface_test";
    return d.str();
  } catch (const std::exception& e) {
    return std::string("fixture probe unavailable: ") + e.what();
  }
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    const char* name;
    std::function<Check()> check;
  };
  const std::vector<Criterion> criteria = {
      {"plan-fixture", plan_fixture},
      {"agent-termination-soundness", agent_soundness},
      {"metric-oracle", metric_oracle},
      {"bench-filter-determinism", bench_chain},
      {"end-to-end-scripted",
       [] {
         auto r = end_to_end(true, true);
         return Check{r.ok, r.detail};
       }},
      {"ablation-parity", ablations},
  };
  int failed = 0;
  for (auto& c : criteria) {
    Check v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << c.name << ": " << v.detail << std::endl;
  }
  std::cout << "NOTE secondary probe-determinism: " << probe_note() << std::endl;
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
