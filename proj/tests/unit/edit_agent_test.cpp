#include <gtest/gtest.h>

#include <random>
#include <set>

#include "peace/edit_agent.hpp"
#include "peace/error.hpp"

namespace peace {
namespace {

using Script = std::vector<nlohmann::json>;

RankedEdits make_ranked(std::size_t n) {
  RankedEdits out;
  for (std::size_t i = 0; i < n; ++i) {
    EditRecord e{"c" + std::to_string(i), "m.py", "m.f" + std::to_string(i), "def f():\n    return " + std::to_string(i),
                 "def f():\n    return " + std::to_string(i + 1), "edit " + std::to_string(i)};
    out.push_back({e, RelevanceScore::uniform(1.0 - 0.01 * static_cast<double>(i))});
  }
  return out;
}

struct Target {
  Corpus corpus = make_corpus({{"t.py", "def target(xs):\n    return sorted(xs)[0]\n"}});
  const FunctionRecord& fn() const { return *corpus.find_function("t.target"); }
};

nlohmann::json call(long i, long j) { return {{"tool_call", {{"name", kFragmentsTool}, {"arguments", {{"i", i}, {"j", j}}}}}}; }

nlohmann::json answer(const std::vector<long>& indices) {
  nlohmann::json list = nlohmann::json::array();
  for (auto i : indices) list.push_back({{"index", i}, {"rationale", "r" + std::to_string(i)}});
  return {{"text", nlohmann::json{{"valid_edits", list}}.dump()}};
}

AgentConfig fast() {
  AgentConfig c;
  c.retry.base_backoff = std::chrono::milliseconds(0);
  return c;
}

TEST(FragmentsRange, Examples) {
  auto ranked = make_ranked(5);
  auto r = get_fragments_range(ranked, 1, 2);
  EXPECT_EQ(r.first, 1u);
  EXPECT_EQ(r.last, 2u);
  EXPECT_FALSE(r.clamped);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0], &ranked[0]);
  EXPECT_EQ(r.entries[1], &ranked[1]);

  auto c = get_fragments_range(ranked, 4, 99);
  EXPECT_EQ(c.last, 5u);
  EXPECT_TRUE(c.clamped);
  EXPECT_EQ(c.entries.size(), 2u);

  try {
    get_fragments_range(ranked, 6, 7);
    FAIL() << "expected EmptyRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRange);
  }
  EXPECT_THROW(get_fragments_range(ranked, 0, 2), std::invalid_argument);
  EXPECT_THROW(get_fragments_range(ranked, 3, 2), std::invalid_argument);

  auto capped = get_fragments_range(make_ranked(30), 1, 30, 10);
  EXPECT_EQ(capped.last, 10u);
  EXPECT_TRUE(capped.clamped);
}

TEST(FragmentsRange, SizeProperty) {
  std::mt19937 rng(5);
  for (int t = 0; t < 500; ++t) {
    std::size_t n = rng() % 15;
    auto ranked = make_ranked(n);
    long i = 1 + static_cast<long>(rng() % 20);
    long j = i + static_cast<long>(rng() % 20);
    std::size_t cap = rng() % 6;
    if (i > static_cast<long>(n)) {
      EXPECT_THROW(get_fragments_range(ranked, i, j, cap), Error);
      continue;
    }
    auto r = get_fragments_range(ranked, i, j, cap);
    std::size_t expect = std::min<long>(j, static_cast<long>(n)) - i + 1;
    if (cap > 0) expect = std::min(expect, cap);
    EXPECT_EQ(r.entries.size(), expect);
    for (std::size_t k = 0; k < r.entries.size(); ++k) EXPECT_EQ(r.entries[k], &ranked[i - 1 + k]);
  }
}

TEST(EditAgent, EmptyListSkipsModel) {
  Target t;
  ScriptedProvider model;
  auto result = identify_valid_edits(t.fn(), {}, model, fast());
  EXPECT_TRUE(result.valid.edits.empty());
  EXPECT_EQ(result.transcript.outcome, "empty");
  EXPECT_EQ(model.calls(), 0u);
}

TEST(EditAgent, ReadsThenAnswers) {
  Target t;
  auto ranked = make_ranked(5);
  ScriptedProvider model(Script{call(1, 3), answer({1, 2})});
  InteractionLog log;
  auto result = identify_valid_edits(t.fn(), ranked, model, fast(), &log);
  EXPECT_EQ(result.transcript.outcome, "answered");
  EXPECT_EQ(result.transcript.tool_calls, 1);
  ASSERT_EQ(result.valid.edits.size(), 2u);
  EXPECT_EQ(result.valid.edits[0].index, 1u);
  EXPECT_EQ(result.valid.edits[0].edit, ranked[0].edit);
  EXPECT_EQ(result.valid.edits[1].edit, ranked[1].edit);
  EXPECT_EQ(result.valid.edits[1].rationale, "r2");
  ASSERT_EQ(log.size(), 2u);

  // The tool result shows edits 1..3 and nothing else.
  auto second = log.entries()[1]["request"]["messages"];
  std::string tool_text;
  for (auto& m : second)
    if (m["role"] == "tool") tool_text = m["content"];
  EXPECT_NE(tool_text.find("#1 commit c0"), std::string::npos);
  EXPECT_NE(tool_text.find("#3 commit c2"), std::string::npos);
  EXPECT_EQ(tool_text.find("#4 "), std::string::npos);
  EXPECT_EQ(log.entries()[0]["request"]["params"]["purpose"], "agent:t.target");
}

TEST(EditAgent, EmptyRangeIsReportedToModel) {
  Target t;
  auto ranked = make_ranked(2);
  ScriptedProvider model(Script{call(5, 6), answer({})});
  auto result = identify_valid_edits(t.fn(), ranked, model, fast());
  EXPECT_EQ(result.transcript.tool_calls, 1);
  EXPECT_NE(result.transcript.turns[0].tool_result.find("EMPTY_RANGE"), std::string::npos);
  EXPECT_TRUE(result.valid.edits.empty());
  EXPECT_EQ(result.transcript.outcome, "answered");
}

TEST(EditAgent, AdversarialModelStopsAtTenCalls) {
  Target t;
  auto ranked = make_ranked(40);
  ScriptedProvider model;
  // Would keep calling forever; the summary request offers no tool.
  model.add_keyed("agent", {call(1, 2)}, true);
  auto result = identify_valid_edits(t.fn(), ranked, model, fast());
  EXPECT_EQ(result.transcript.tool_calls, 10);
  EXPECT_EQ(model.calls(), 11u);
  EXPECT_TRUE(result.valid.edits.empty());
  EXPECT_EQ(result.transcript.outcome, "aborted");
}

TEST(EditAgent, SummaryAfterBudget) {
  Target t;
  auto ranked = make_ranked(40);
  Script s;
  for (int k = 0; k < 10; ++k) s.push_back(call(k + 1, k + 1));
  s.push_back(answer({3, 7}));
  ScriptedProvider model(s);
  InteractionLog log;
  auto result = identify_valid_edits(t.fn(), ranked, model, fast(), &log);
  EXPECT_EQ(result.transcript.tool_calls, 10);
  EXPECT_EQ(result.transcript.outcome, "summarized");
  ASSERT_EQ(result.valid.edits.size(), 2u);
  EXPECT_EQ(result.valid.edits[1].edit, ranked[6].edit);
  auto last = log.entries().back()["request"];
  EXPECT_TRUE(last["tools"].empty());
  EXPECT_NE(last["messages"].back()["content"].get<std::string>().find("budget is exhausted"), std::string::npos);
}

TEST(EditAgent, RespectsConfiguredIterations) {
  Target t;
  auto ranked = make_ranked(5);
  ScriptedProvider model;
  model.add_keyed("agent", {call(1, 1)}, true);
  auto config = fast();
  config.max_iterations = 3;
  auto result = identify_valid_edits(t.fn(), ranked, model, config);
  EXPECT_EQ(result.transcript.tool_calls, 3);
}

TEST(EditAgent, MalformedToolCallRepromptsOnceThenAborts) {
  Target t;
  auto ranked = make_ranked(5);
  nlohmann::json bad = {{"tool_call", {{"name", kFragmentsTool}, {"arguments", {{"i", "one"}, {"j", 2}}}}}};
  {
    ScriptedProvider model(Script{bad, answer({2})});
    auto result = identify_valid_edits(t.fn(), ranked, model, fast());
    EXPECT_EQ(result.transcript.outcome, "answered");
    EXPECT_EQ(result.transcript.tool_calls, 0);
    ASSERT_EQ(result.valid.edits.size(), 1u);
  }
  {
    nlohmann::json wrong_tool = {{"tool_call", {{"name", "rm_rf"}, {"arguments", nlohmann::json::object()}}}};
    ScriptedProvider model(Script{bad, wrong_tool, answer({1})});
    auto result = identify_valid_edits(t.fn(), ranked, model, fast());
    EXPECT_EQ(result.transcript.outcome, "aborted");
    EXPECT_TRUE(result.valid.edits.empty());
    EXPECT_EQ(model.calls(), 2u);
  }
  {
    ScriptedProvider model(Script{{{"text", "I think edit 2 looks good"}}, {{"text", "still prose"}}});
    auto result = identify_valid_edits(t.fn(), ranked, model, fast());
    EXPECT_EQ(result.transcript.outcome, "aborted");
    EXPECT_TRUE(result.valid.edits.empty());
  }
}

TEST(EditAgent, FencedAnswerAndInvalidIndices) {
  Target t;
  auto ranked = make_ranked(3);
  ScriptedProvider model(Script{{{"text", "Here:\n```json\n{\"valid_edits\": [{\"index\": 3}, {\"index\": 9}, "
                                          "{\"index\": 3}, {\"index\": 0}, 1]}\n```"}}});
  auto result = identify_valid_edits(t.fn(), ranked, model, fast());
  ASSERT_EQ(result.valid.edits.size(), 2u);
  EXPECT_EQ(result.valid.edits[0].index, 3u);
  EXPECT_EQ(result.valid.edits[1].index, 1u);
  EXPECT_EQ(result.transcript.diagnostics.size(), 2u);
}

TEST(EditAgent, ModelFailureYieldsEmptySelection) {
  Target t;
  auto ranked = make_ranked(3);
  ScriptedProvider model(Script{{{"fail", "transient"}}, {{"fail", "transient"}}});
  auto config = fast();
  config.retry.max_retries = 1;
  auto result = identify_valid_edits(t.fn(), ranked, model, config);
  EXPECT_EQ(result.transcript.outcome, "model_failure");
  EXPECT_TRUE(result.valid.edits.empty());
}

TEST(EditAgent, OpeningPromptIsComplete) {
  Target t;
  auto msgs = agent_opening(t.fn(), 17, AgentConfig{}, PromptLibrary::builtin());
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].role, "system");
  EXPECT_NE(msgs[0].content.find("t.target"), std::string::npos);
  EXPECT_NE(msgs[0].content.find("17 historical edits"), std::string::npos);
  const auto& user = msgs[1].content;
  EXPECT_NE(user.find("valid associated edit"), std::string::npos);
  EXPECT_NE(user.find("get_fragments_range"), std::string::npos);
  EXPECT_NE(user.find("At most 10 edits"), std::string::npos);
  EXPECT_NE(user.find("at most 10 calls"), std::string::npos);
  EXPECT_NE(user.find("\"valid_edits\""), std::string::npos);
  EXPECT_NE(user.find(t.fn().body), std::string::npos);
  EXPECT_EQ(user.find("{{"), std::string::npos);
}

TEST(EditAgent, Deterministic) {
  Target t;
  auto ranked = make_ranked(8);
  Script s = {call(1, 4), call(5, 8), answer({2, 6})};
  ScriptedProvider a(s), b(s);
  EXPECT_EQ(identify_valid_edits(t.fn(), ranked, a, fast()).transcript.to_json(),
            identify_valid_edits(t.fn(), ranked, b, fast()).transcript.to_json());
}

// Invariant: whatever the model says, the selection is a duplicate-free
// subset of the ranked list, and no more than max_iterations calls are served.
TEST(EditAgent, RandomTranscriptsNeverFabricate) {
  Target t;
  std::mt19937 rng(77);
  int fabrications = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = rng() % 25;
    auto ranked = make_ranked(n);
    Script s;
    int calls = static_cast<int>(rng() % 14);
    for (int k = 0; k < calls; ++k) {
      long i = static_cast<long>(rng() % 30) - 2;
      long j = i + static_cast<long>(rng() % 12) - 2;
      s.push_back(call(i, j));
    }
    std::vector<long> picks;
    int m = static_cast<int>(rng() % 8);
    for (int k = 0; k < m; ++k) picks.push_back(static_cast<long>(rng() % 35) - 3);
    s.push_back(answer(picks));
    s.push_back(answer(picks));  // in case a malformed call used the reprompt
    ScriptedProvider model(s);
    AgentResult result;
    try {
      result = identify_valid_edits(t.fn(), ranked, model, fast());
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::ScriptExhausted);
      continue;
    }
    EXPECT_LE(result.transcript.tool_calls, 10);
    std::set<std::size_t> seen;
    for (auto& sel : result.valid.edits) {
      bool ok = sel.index >= 1 && sel.index <= ranked.size() && ranked[sel.index - 1].edit == sel.edit &&
                seen.insert(sel.index).second;
      if (!ok) ++fabrications;
    }
  }
  EXPECT_EQ(fabrications, 0);
}

}  // namespace
}  // namespace peace
