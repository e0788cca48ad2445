#include <gtest/gtest.h>

#include <random>

#include "peace/error.hpp"
#include "peace/optimize_pipeline.hpp"
#include "peace/util/files.hpp"
#include "peace/util/text.hpp"

namespace peace {
namespace {

using Script = std::vector<nlohmann::json>;

nlohmann::json code(const std::string& body) { return {{"text", "```python\n" + body + "\n```"}}; }

FunctionRecord parse_one(const std::string& text) {
  auto rec = parse_function_definition(text);
  EXPECT_TRUE(rec.has_value()) << text;
  return *rec;
}

GenerationConfig fast() {
  GenerationConfig c;
  c.retry.base_backoff = std::chrono::milliseconds(0);
  c.retry.max_retries = 0;
  return c;
}

const char* kSlow =
    "def total(xs):\n"
    "    s = 0\n"
    "    for i in range(len(xs)):\n"
    "        s = s + xs[i] * len(xs)\n"
    "    return s";

const char* kHoisted =
    "def total(xs):\n"
    "    n = len(xs)\n"
    "    s = 0\n"
    "    for x in xs:\n"
    "        s += x * n\n"
    "    return s";

TEST(FencedBlocks, OnlyLineStartFencesCount) {
  std::string text = "Reply in one ```python block.\n\n```python\nA\n```\n\nmore\n  ```\nB\n  ```\n";
  auto blocks = util::fenced_blocks(text);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], "A");
  EXPECT_EQ(blocks[1], "B");
  EXPECT_EQ(util::first_fenced_block(text).body, "A");
}

TEST(ExtractFunction, Forms) {
  auto a = extract_function("Here you go:\n```python\n" + std::string(kHoisted) + "\n```\nDone.");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->body, kHoisted);
  auto b = extract_function(kHoisted);
  ASSERT_TRUE(b);
  EXPECT_EQ(b->name, "total");
  auto c = extract_function("@cache\ndef g(x):\n    return x");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->body, "def g(x):\n    return x");
  EXPECT_FALSE(extract_function("def a():\n    pass\ndef b():\n    pass"));
  EXPECT_FALSE(extract_function("def a(:\n    pass"));
  EXPECT_FALSE(extract_function("no code here"));
}

TEST(CallCompatible, BindingRules) {
  auto fn = parse_one("def f(a, b, c=1, *, d, e=2):\n    pass");
  auto site = [](std::size_t pos, std::vector<std::string> kw = {}, bool star = false) {
    CallSite s;
    s.callee = "f";
    s.positional_args = pos;
    s.keyword_args = std::move(kw);
    s.star_args = star;
    return s;
  };
  EXPECT_TRUE(call_compatible(fn, site(2, {"d"})));
  EXPECT_TRUE(call_compatible(fn, site(3, {"d", "e"})));
  EXPECT_TRUE(call_compatible(fn, site(1, {"b", "d"})));
  EXPECT_FALSE(call_compatible(fn, site(2)));                // d missing
  EXPECT_FALSE(call_compatible(fn, site(4, {"d"})));         // too many
  EXPECT_FALSE(call_compatible(fn, site(2, {"a", "d"})));    // a twice
  EXPECT_FALSE(call_compatible(fn, site(2, {"d", "zz"})));   // unknown keyword
  EXPECT_TRUE(call_compatible(fn, site(0, {}, true)));       // *args: unknown shape
  auto var = parse_one("def g(a, *rest, **kw):\n    pass");
  EXPECT_TRUE(call_compatible(var, site(5, {"anything"})));
  EXPECT_FALSE(call_compatible(var, site(0)));
  auto po = parse_one("def h(a, /, b):\n    pass");
  EXPECT_FALSE(call_compatible(po, site(0, {"a", "b"})));
  EXPECT_TRUE(call_compatible(po, site(1, {"b"})));
}

TEST(CallCompatible, MethodsSkipReceiver) {
  auto unit = parse_unit("k.py",
                         "class K:\n    def m(self, x):\n        return x\n\n"
                         "    @staticmethod\n    def s(x):\n        return x\n");
  CallSite one;
  one.positional_args = 1;
  EXPECT_TRUE(call_compatible(*unit.find("k.K.m"), one));
  EXPECT_TRUE(call_compatible(*unit.find("k.K.s"), one));
  CallSite two;
  two.positional_args = 2;
  EXPECT_FALSE(call_compatible(*unit.find("k.K.m"), two));
}

TEST(InitialEdit, ScriptedBodyBecomesCandidate) {
  auto fn = parse_one(kSlow);
  fn.id = "m.total";
  ScriptedProvider model(Script{code(kHoisted)});
  InteractionLog log;
  auto c = generate_initial_edit(fn, {}, std::nullopt, model, fast(), &log);
  EXPECT_EQ(c.stage, Stage::Initial);
  EXPECT_EQ(c.new_body, kHoisted);
  EXPECT_EQ(c.function_id, "m.total");
  auto prompt = log.entries()[0]["request"]["messages"][0]["content"].get<std::string>();
  // No task prompt: the generic instruction leads the prompt.
  EXPECT_EQ(prompt.find(PromptLibrary::builtin().raw("generic_instruction")), 0u);
  EXPECT_EQ(prompt.find("Related historical edits"), std::string::npos);
  EXPECT_EQ(log.entries()[0]["request"]["params"]["purpose"], "initial_edit:m.total");
}

TEST(InitialEdit, TaskPromptAndValidEdits) {
  auto fn = parse_one(kSlow);
  fn.id = "m.total";
  ScriptedProvider model(Script{code(kHoisted)});
  InteractionLog log;
  EditRecord e{"abc123", "m.py", "m.other", "def other(): pass", "def other(): return 1", "hoist len"};
  generate_initial_edit(fn, {e}, std::string("Hoist repeated len calls."), model, fast(), &log);
  auto prompt = log.entries()[0]["request"]["messages"][0]["content"].get<std::string>();
  EXPECT_EQ(prompt.find("Hoist repeated len calls."), 0u);
  EXPECT_NE(prompt.find("Related historical edits"), std::string::npos);
  EXPECT_NE(prompt.find("def other(): return 1"), std::string::npos);
}

TEST(InitialEdit, RepromptThenError) {
  auto fn = parse_one(kSlow);
  fn.id = "m.total";
  {
    ScriptedProvider model(Script{{{"text", "def total(xs:\n  oops"}}, {{"text", "still broken ("}}});
    try {
      generate_initial_edit(fn, {}, std::nullopt, model, fast());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::UnparseableCandidate);
    }
    EXPECT_EQ(model.calls(), 2u);
  }
  {
    ScriptedProvider model(Script{code("def renamed(xs):\n    return 0"), code(kHoisted)});
    InteractionLog log;
    auto c = generate_initial_edit(fn, {}, std::nullopt, model, fast(), &log);
    EXPECT_EQ(c.new_body, kHoisted);
    auto second = log.entries()[1]["request"]["messages"];
    EXPECT_NE(second.back()["content"].get<std::string>().find("keep the name `total`"), std::string::npos);
  }
  {
    ScriptedProvider model(Script{code("def total(xs, extra):\n    return 0"), code("def total():\n    return 0")});
    EXPECT_THROW(generate_initial_edit(fn, {}, std::nullopt, model, fast()), Error);
  }
  {
    ScriptedProvider model(Script{{{"fail", "transient"}}});
    try {
      generate_initial_edit(fn, {}, std::nullopt, model, fast());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ModelFailure);
    }
  }
}

RetrievalResult results(const std::vector<std::pair<std::string, std::string>>& items, Origin origin) {
  RetrievalResult r;
  for (auto& [id, body] : items) r.entries.push_back({{id, origin, "t", body, {}}, 0.5});
  return r;
}

TEST(Augment, CountsAndDedup) {
  auto fn = parse_one(kSlow);
  EditCandidate init{"m.total", kHoisted, Stage::Initial, "x"};
  auto p = augment(fn, init, results({{"i1", "def a():\n    return 1"}, {"i2", "def b():\n    return 2"}}, Origin::Internal),
                   results({{"e1", "def c():\n    return 3"}}, Origin::External));
  ASSERT_EQ(p.alternatives.size(), 4u);
  EXPECT_EQ(p.alternatives[0].label, "initial edit");
  EXPECT_EQ(p.alternatives[1].label, "internal: i1");
  EXPECT_EQ(p.alternatives[3].label, "external: e1");

  // Same text as the initial candidate up to whitespace.
  std::string dup = kHoisted;
  dup.replace(dup.find("s += x * n"), 10, "s  +=  x * n");
  auto q = augment(fn, init, results({{"i1", "def a():\n    return 1"}, {"i2", dup}}, Origin::Internal),
                   results({{"e1", "def c():\n    return 3"}}, Origin::External));
  EXPECT_EQ(q.alternatives.size(), 3u);

  auto r = augment(fn, init, {}, {});
  ASSERT_EQ(r.alternatives.size(), 1u);
  auto text = r.render();
  EXPECT_NE(text.find("most efficient version"), std::string::npos);
  EXPECT_NE(text.find(kSlow), std::string::npos);
  EXPECT_EQ(util::fenced_blocks(text).size(), 2u);
}

TEST(ProposeOptimized, SelectsAlternativeOrFallsBack) {
  auto fn = parse_one(kSlow);
  fn.id = "m.total";
  EditCandidate init{"m.total", kHoisted, Stage::Initial, "x"};
  std::string fastest = "def total(xs):\n    return sum(xs) * len(xs)";
  auto prompt = augment(fn, init, {}, results({{"ext.fast", fastest}}, Origin::External));
  {
    ScriptedProvider model(Script{code(fastest)});
    auto c = propose_optimized(fn, prompt, init, model, fast());
    EXPECT_EQ(c.stage, Stage::Optimized);
    EXPECT_EQ(c.new_body, fastest);
    EXPECT_FALSE(c.fallback);
    EXPECT_NE(c.provenance.find("selected external: ext.fast"), std::string::npos);
  }
  {
    // Echo of block 2 picks the first alternative: the single-alternative case.
    auto single = augment(fn, init, {}, {});
    ScriptedProvider model(Script{{{"echo", 2}}});
    auto c = propose_optimized(fn, single, init, model, fast());
    EXPECT_EQ(c.new_body, kHoisted);
    EXPECT_NE(c.provenance.find("selected initial edit"), std::string::npos);
  }
  {
    ScriptedProvider model(Script{{{"fail", "transient"}}});
    auto c = propose_optimized(fn, prompt, init, model, fast());
    EXPECT_TRUE(c.fallback);
    EXPECT_EQ(c.new_body, kHoisted);
    EXPECT_FALSE(c.diagnostics.empty());
  }
}

TEST(Integrate, PassthroughRenameAndArityFallback) {
  auto corpus = make_corpus({{"m.py", std::string(kSlow) + "\n\n\ndef use(v):\n    return total(v)\n"}});
  auto graph = build_call_graph(corpus);
  const auto& fn = *corpus.find_function("m.total");
  auto sites = call_sites_of(corpus, graph, "m.total");
  ASSERT_EQ(sites.size(), 1u);
  EXPECT_EQ(sites[0].positional_args, 1u);
  {
    EditCandidate opt{"m.total", kHoisted, Stage::Optimized, "x"};
    ScriptedProvider model(Script{{{"echo", true}}});
    auto c = integrate(fn, opt, sites, model, fast());
    EXPECT_EQ(c.stage, Stage::Integrated);
    EXPECT_EQ(c.new_body, opt.new_body);
    EXPECT_FALSE(c.fallback);
  }
  {
    // A candidate taken from another function keeps the public name.
    EditCandidate opt{"m.total", "def fast_total(xs):\n    return sum(xs) * len(xs)", Stage::Optimized, "x"};
    ScriptedProvider model(Script{{{"echo", true}}});
    auto c = integrate(fn, opt, sites, model, fast());
    EXPECT_EQ(c.new_body, "def total(xs):\n    return sum(xs) * len(xs)");
  }
  {
    EditCandidate opt{"m.total", "def total(xs, scale):\n    return sum(xs) * scale", Stage::Optimized, "x"};
    ScriptedProvider model(Script{{{"echo", true}}, {{"echo", true}}});
    auto c = integrate(fn, opt, sites, model, fast());
    EXPECT_TRUE(c.fallback);
    EXPECT_EQ(c.new_body, kSlow);
    EXPECT_EQ(model.calls(), 2u);
  }
}

TEST(AppendHistory, GrowNoopDuplicate) {
  auto fn = parse_one(kSlow);
  fn.id = "m.total";
  fn.path = "m.py";
  std::vector<EditRecord> history(3, EditRecord{"c", "x.py", "x.f", "a", "b", "m"});
  EditCandidate c{"m.total", kHoisted, Stage::Integrated, "x"};
  EXPECT_TRUE(append_history(history, fn, c, "run:1"));
  EXPECT_EQ(history.size(), 4u);
  EXPECT_EQ(history.back().before, kSlow);
  EXPECT_EQ(history.back().after, kHoisted);
  EXPECT_FALSE(append_history(history, fn, c, "run:2"));
  EXPECT_EQ(history.size(), 4u);
  EditCandidate noop{"m.total", kSlow, Stage::Integrated, "fallback", true};
  EXPECT_FALSE(append_history(history, fn, noop, "run:3"));
  EXPECT_EQ(history.size(), 4u);
}

TEST(Splice, MethodsKeepIndentation) {
  std::string src = "class K:\n    def m(self, x):\n        return x + 1\n\n    def n(self):\n        return 2\n";
  auto unit = parse_unit("k.py", src);
  const auto& m = *unit.find("k.K.m");
  auto out = splice_function(src, m, "def m(self, x):\n    y = x\n    return y + 1");
  EXPECT_EQ(out, "class K:\n    def m(self, x):\n        y = x\n        return y + 1\n\n    def n(self):\n        return 2\n");
  EXPECT_TRUE(parse_unit("k.py", out).syntax_ok());
}

FileMap toy_files() {
  return read_python_files(std::filesystem::path(PEACE_SOURCE_DIR) / "tests" / "fixtures" / "toy");
}

const std::vector<std::string> kFig3 = {"mod.f_d", "mod.f_t", "mod.f_a", "mod.f_b"};

const char* kFastFd = "def f_d(n):\n    return n * (n - 1) // 2";

struct Models {
  ScriptedProvider agent, generator, optimizer, integrator;
  FallbackDependencyScorer dep;
  HashingEmbedder embedder{64};
  RelevanceScorer scorer{dep, embedder};

  Models() {
    agent.add_keyed("agent", {{{"text", "{\"valid_edits\": []}"}}}, true);
    generator.add_keyed("initial_edit", {{{"echo", true}}}, true);
    optimizer.add_keyed("optimize", {{{"echo", 2}}}, true);  // first alternative = initial edit
    integrator.add_keyed("integrate", {{{"echo", true}}}, true);
  }
  PipelineModels wire() { return {&agent, &generator, &optimizer, &integrator, &scorer, &embedder}; }
};

TEST(RunSequence, PassthroughKeepsOrder) {
  Models m;
  KnowledgeIndex knowledge;
  PipelineOptions opts;
  opts.generation = fast();
  auto res = run_sequence(toy_files(), kFig3, {}, knowledge, m.wire(), opts);
  ASSERT_EQ(res.patch.entries.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(res.patch.entries[i].function_id, kFig3[i]);
    EXPECT_TRUE(res.patch.entries[i].noop());
  }
  EXPECT_EQ(res.files, toy_files());

  auto single = run_sequence(toy_files(), {"mod.f_t"}, {}, knowledge, m.wire(), opts);
  EXPECT_EQ(single.patch.entries.size(), 1u);
}

TEST(RunSequence, EditsApplyInOrderAndFailuresAreNoops) {
  Models m;
  m.generator.add_keyed("initial_edit:mod.f_d", {code(kFastFd)});
  m.generator.add_keyed("initial_edit:mod.f_t", {code("def f_t(n):\n    return f_d(n) + n + 1")});
  m.generator.add_keyed("initial_edit:mod.f_a", {{{"fail", "transient"}}});
  m.generator.add_keyed("initial_edit:mod.f_b", {code("def f_b(n):\n    t = f_t(n)\n    return t - 1")});
  KnowledgeIndex knowledge;
  PipelineOptions opts;
  opts.generation = fast();
  std::vector<EditRecord> history = {{"c0", "mod.py", "mod.f_c", "def f_c(n):\n    return 1 + n",
                                      "def f_c(n):\n    return n + 1", "tidy"}};
  auto files = toy_files();
  auto res = run_sequence(files, kFig3, history, knowledge, m.wire(), opts);
  ASSERT_EQ(res.patch.entries.size(), 4u);
  EXPECT_EQ(res.patch.entries[0].new_body, kFastFd);
  EXPECT_FALSE(res.patch.entries[1].noop());
  EXPECT_TRUE(res.patch.entries[2].noop());
  EXPECT_FALSE(res.patch.entries[3].noop());
  EXPECT_FALSE(res.report.steps[2].diagnostics.empty());
  for (auto& s : res.report.steps) EXPECT_TRUE(s.parseable);

  // Phase II re-runs per function and sees edits appended by earlier steps.
  EXPECT_EQ(res.report.steps[0].ranked_edits, 1u);
  EXPECT_EQ(res.report.steps[1].ranked_edits, 2u);
  EXPECT_EQ(res.report.steps[2].ranked_edits, 3u);
  EXPECT_EQ(res.history.size(), 4u);

  // The patch replays onto the base and is idempotent.
  auto replay = apply_project_patch(files, res.patch);
  EXPECT_EQ(replay, res.files);
  EXPECT_EQ(apply_project_patch(replay, res.patch), replay);
  auto json = res.patch.to_json();
  EXPECT_EQ(ProjectPatch::from_json(json).entries, res.patch.entries);

  // Signatures still fit every call site.
  auto corpus = corpus_from_files(res.files);
  auto graph = build_call_graph(corpus);
  for (auto& e : res.patch.entries)
    for (auto& site : call_sites_of(corpus, graph, e.function_id))
      EXPECT_TRUE(call_compatible(*corpus.find_function(e.function_id), site)) << e.function_id;

  auto diff = files_diff(files, res.files);
  EXPECT_NE(diff.find("+++ b/mod.py"), std::string::npos);
  EXPECT_NE(diff.find("+    return n * (n - 1) // 2"), std::string::npos);
}

TEST(RunSequence, GateRevertsAndUnparseableNeverLands) {
  Models m;
  m.generator.add_keyed("initial_edit:mod.f_d", {code(kFastFd)});
  KnowledgeIndex knowledge;
  PipelineOptions opts;
  opts.generation = fast();
  auto res = run_sequence(toy_files(), {"mod.f_d"}, {}, knowledge, m.wire(), opts, nullptr,
                          [](const FileMap&) { return std::optional<std::string>("tests failed"); });
  EXPECT_TRUE(res.patch.entries[0].noop());
  EXPECT_FALSE(res.report.steps[0].applied);
  EXPECT_EQ(res.files, toy_files());
}

TEST(RunSequence, RetrievalFeedsOptimizerAndAblationsRun) {
  for (int variant = 0; variant < 3; ++variant) {
    Models m;
    m.optimizer.add_keyed("optimize:mod.f_d", {code(kFastFd)});
    KnowledgeIndex knowledge;
    knowledge.ingest(snippet_sources_from_corpus(corpus_from_files(toy_files())), Origin::Internal, m.embedder);
    knowledge.ingest({{"ext.sum_of_range", "sample", "def sum_of_range(n):\n    return n * (n - 1) // 2"}},
                     Origin::External, m.embedder);
    PipelineOptions opts;
    opts.generation = fast();
    opts.use_valid_edits = variant != 1;
    opts.use_retrieval = variant != 2;
    InteractionLog log;
    auto res = run_sequence(toy_files(), kFig3, {}, knowledge, m.wire(), opts, &log);
    ASSERT_EQ(res.patch.entries.size(), 4u);
    EXPECT_EQ(res.patch.entries[0].new_body, kFastFd) << variant;
    bool saw_agent = false, saw_external = false;
    for (auto& e : log.entries()) {
      auto purpose = e["request"]["params"]["purpose"].get<std::string>();
      if (purpose.rfind("agent:", 0) == 0) saw_agent = true;
      if (purpose == "optimize:mod.f_d" &&
          e["request"]["messages"][0]["content"].get<std::string>().find("external: ext.sum_of_range") !=
              std::string::npos)
        saw_external = true;
    }
    EXPECT_EQ(saw_agent, variant != 1);
    EXPECT_EQ(saw_external, variant != 2);
    if (variant != 2) {
      EXPECT_LE(res.report.steps[0].retrieved.size(), 2 * kDefaultRetrievalK);
      for (auto& id : res.report.steps[0].retrieved) EXPECT_NE(id, "mod.f_d");
      EXPECT_EQ(knowledge.find("mod.f_d")->body, kFastFd);
    }
  }
}

TEST(RunSequence, UnknownFunctionIsNoop) {
  Models m;
  KnowledgeIndex knowledge;
  PipelineOptions opts;
  opts.generation = fast();
  auto res = run_sequence(toy_files(), {"mod.nope"}, {}, knowledge, m.wire(), opts);
  ASSERT_EQ(res.patch.entries.size(), 1u);
  EXPECT_TRUE(res.patch.entries[0].noop());
  EXPECT_FALSE(res.report.steps[0].diagnostics.empty());
}

TEST(ApplyProjectPatch, MismatchFails) {
  ProjectPatch p{"", {{"mod.f_c", "mod.py", "def f_c(n):\n    return 0", "def f_c(n):\n    return 2"}}};
  try {
    apply_project_patch(toy_files(), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PatchApplyFailure);
  }
}

// Invariant: random accepted edits keep every file parseable and the patch
// replays exactly.
TEST(RunSequence, RandomEditsProperty) {
  std::mt19937 rng(13);
  const char* bodies[] = {"    return n", "    x = n\n    return x", "    return n + 0", "    return max(n, 0)"};
  for (int trial = 0; trial < 10; ++trial) {
    Models m;
    for (auto& id : kFig3) {
      auto name = id.substr(4);
      if (rng() % 3 == 0) continue;
      m.generator.add_keyed("initial_edit:" + id, {code("def " + name + "(n):\n" + bodies[rng() % 4])});
    }
    KnowledgeIndex knowledge;
    PipelineOptions opts;
    opts.generation = fast();
    auto files = toy_files();
    auto res = run_sequence(files, kFig3, {}, knowledge, m.wire(), opts);
    for (auto& s : res.report.steps) EXPECT_TRUE(s.parseable);
    EXPECT_EQ(apply_project_patch(files, res.patch), res.files);
    for (auto& [path, content] : res.files) EXPECT_TRUE(parse_unit(path, content).syntax_ok());
  }
}

TEST(ContextBudget, OptimizerDropsLeastSimilarSnippets) {
  auto fn = parse_one(kSlow);
  EditCandidate init{"m.total", kHoisted, Stage::Initial, "x"};
  RetrievalResult internal, external;
  internal.entries.push_back({{"near", Origin::Internal, "t", "def a():\n    return 1", {}}, 0.9});
  internal.entries.push_back({{"far", Origin::Internal, "t", "def b():\n    return " + std::string(400, '2'), {}}, 0.1});
  external.entries.push_back({{"mid", Origin::External, "t", "def c():\n    return 3", {}}, 0.5});
  auto p = augment(fn, init, internal, external);
  ASSERT_EQ(p.alternatives.size(), 4u);
  auto full = estimate_tokens(p.render());

  auto unlimited = p;
  EXPECT_EQ(fit_optimizer_prompt(unlimited, 0), 0u);
  EXPECT_EQ(fit_optimizer_prompt(unlimited, full), 0u);
  EXPECT_EQ(unlimited.alternatives.size(), 4u);

  auto tight = p;
  EXPECT_EQ(fit_optimizer_prompt(tight, full - 1), 1u);
  std::vector<std::string> labels;
  for (auto& a : tight.alternatives) labels.push_back(a.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"initial edit", "internal: near", "external: mid"}));
  EXPECT_LE(estimate_tokens(tight.render()), full - 1);

  // The initial edit stays even when nothing fits.
  auto tiny = p;
  EXPECT_EQ(fit_optimizer_prompt(tiny, 1), 3u);
  ASSERT_EQ(tiny.alternatives.size(), 1u);
  EXPECT_EQ(tiny.alternatives[0].label, "initial edit");
}

TEST(ContextBudget, InitialEditDropsLowestRankedEdits) {
  auto fn = parse_one(kSlow);
  fn.id = "m.total";
  std::vector<EditRecord> edits;
  for (int i = 0; i < 3; ++i)
    edits.push_back({"c" + std::to_string(i), "m.py", "m.f" + std::to_string(i), "def f(): pass",
                     "def f(): return " + std::string(200, char('a' + i)), "edit " + std::to_string(i)});
  InteractionLog log;
  ScriptedProvider unlimited(Script{code(kHoisted)});
  generate_initial_edit(fn, edits, std::nullopt, unlimited, fast(), &log);
  auto full = estimate_tokens(log.entries()[0]["request"]["messages"][0]["content"].get<std::string>());

  auto cfg = fast();
  cfg.context_budget_tokens = full - 1;
  ScriptedProvider model(Script{code(kHoisted)});
  InteractionLog tight;
  auto c = generate_initial_edit(fn, edits, std::nullopt, model, cfg, &tight);
  auto prompt = tight.entries()[0]["request"]["messages"][0]["content"].get<std::string>();
  EXPECT_LE(estimate_tokens(prompt), full - 1);
  EXPECT_NE(prompt.find(std::string(200, 'a')), std::string::npos);
  EXPECT_NE(prompt.find(std::string(200, 'b')), std::string::npos);
  EXPECT_EQ(prompt.find(std::string(200, 'c')), std::string::npos);
  ASSERT_FALSE(c.diagnostics.empty());
  EXPECT_NE(c.diagnostics.back().find("1 associated edit"), std::string::npos);
}

}  // namespace
}  // namespace peace
