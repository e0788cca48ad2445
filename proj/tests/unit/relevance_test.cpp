#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "peace/error.hpp"
#include "peace/relevance.hpp"

namespace peace {
namespace {

using Ids = std::vector<std::string>;

TEST(DependencyScore, DirectCallWithFallbackIsAtLeastHalf) {
  auto corpus = make_corpus({{"m.py", "def a(x):\n    return b(x)\ndef b(y):\n    return y\n"}});
  auto g = build_call_graph(corpus);
  FallbackDependencyScorer s(&g);
  Subject a{"m.a", corpus.find_function("m.a")->body}, b{"m.b", corpus.find_function("m.b")->body};
  EXPECT_GE(dependency_score(a, b, s), 0.5);
  // Identifier sets {a,x,b} and {b,y}: one shared of four.
  EXPECT_DOUBLE_EQ(dependency_score(a, b, s), 0.5 + 0.5 * (1.0 / 4.0));
  EXPECT_DOUBLE_EQ(dependency_score(b, a, s), dependency_score(a, b, s));
}

TEST(DependencyScore, DisjointIdentifiersNoEdge) {
  FallbackDependencyScorer s;
  EXPECT_EQ(dependency_score({"p", "def p(): return alpha"}, {"q", "def q(): return beta"}, s), 0.0);
}

TEST(DependencyScore, ScriptedPassThroughAndClamp) {
  TableDependencyScorer t({{"b", 0.73}, {"c", 1.7}, {"d", -0.2}});
  EXPECT_DOUBLE_EQ(dependency_score({"a", ""}, {"b", ""}, t), 0.73);
  EXPECT_DOUBLE_EQ(dependency_score({"a", ""}, {"c", ""}, t), 1.0);
  EXPECT_DOUBLE_EQ(dependency_score({"a", ""}, {"d", ""}, t), 0.0);
}

TEST(DependencyScore, ModelScorerParsesNumberOrIsUnavailable) {
  ScriptedProvider p(std::vector<nlohmann::json>{{{"text", "Score: 0.42"}}, {{"text", "no idea"}}});
  ModelDependencyScorer s(p, {}, {0, std::chrono::milliseconds(0)});
  EXPECT_DOUBLE_EQ(dependency_score({"a", "x"}, {"b", "y"}, s), 0.42);
  try {
    dependency_score({"a", "x"}, {"b", "y"}, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScorerUnavailable);
  }
}

TEST(SemanticScore, MockVectors) {
  TableEmbedder e(2, {{"x", {1, 0}}, {"y", {0, 1}}, {"d", {1, 1}}});
  EXPECT_DOUBLE_EQ(semantic_score({"1", "x"}, {"2", "x"}, e), 1.0);
  EXPECT_DOUBLE_EQ(semantic_score({"1", "x"}, {"2", "y"}, e), 0.5);
  // Oracle: cos = 1/sqrt(2), mapped to (cos+1)/2.
  double oracle = (1.0 / std::sqrt(2.0) + 1.0) / 2.0;
  EXPECT_NEAR(semantic_score({"1", "d"}, {"2", "x"}, e), oracle, 1e-12);
  EXPECT_NEAR(oracle, 0.8536, 1e-4);
  TableEmbedder nonneg(2, {{"x", {1, 0}}, {"y", {0, 1}}}, true);
  EXPECT_DOUBLE_EQ(semantic_score({"1", "x"}, {"2", "y"}, nonneg), 0.0);
}

TEST(SemanticScore, IdenticalTextsWithHashingEmbedder) {
  HashingEmbedder e;
  EXPECT_NEAR(semantic_score({"a", "def f(): return 1"}, {"b", "def f(): return 1"}, e), 1.0, 1e-12);
}

TEST(Combine, Examples) {
  EXPECT_DOUBLE_EQ(combine(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(combine(0.0, 0.0), 0.0);
  EXPECT_NEAR(combine(0.6, 0.8), 0.7, 1e-15);
  EXPECT_DOUBLE_EQ(combine(0.6, 0.8, 1.0), 0.6);
}

std::map<std::string, RelevanceScore> uniform_scores(std::map<std::string, double> m) {
  std::map<std::string, RelevanceScore> out;
  for (auto& [k, v] : m) out[k] = RelevanceScore::uniform(v);
  return out;
}

TEST(BuildSequence, Fig3Toy) {
  auto corpus = load_corpus_dir(PEACE_SOURCE_DIR "/tests/fixtures/toy");
  auto g = build_call_graph(corpus);
  auto seq = build_sequence(g, "mod.f_t",
                            uniform_scores({{"mod.f_d", 0.9}, {"mod.f_a", 0.8}, {"mod.f_b", 0.6}, {"mod.f_c", 0.12}}));
  EXPECT_EQ(seq.ids(), (Ids{"mod.f_d", "mod.f_t", "mod.f_a", "mod.f_b"}));
  EXPECT_EQ(seq.entries[0].role, Role::Callee);
  EXPECT_EQ(seq.entries[1].role, Role::Target);
  EXPECT_EQ(seq.entries[2].role, Role::Caller);
  EXPECT_NO_THROW(seq.check(0.5));
  EXPECT_EQ(OptimizingFunctionSequence::from_json(seq.to_json()).to_json(), seq.to_json());
}

TEST(BuildSequence, PlanWithTableScorer) {
  auto corpus = load_corpus_dir(PEACE_SOURCE_DIR "/tests/fixtures/toy");
  auto g = build_call_graph(corpus);
  TableRelevanceScorer scorer({{"mod.f_d", 0.9}, {"mod.f_a", 0.8}, {"mod.f_b", 0.6}, {"mod.f_c", 0.12}});
  auto seq = plan_sequence(corpus, g, "mod.f_t", scorer);
  EXPECT_EQ(seq.ids(), (Ids{"mod.f_d", "mod.f_t", "mod.f_a", "mod.f_b"}));
}

TEST(BuildSequence, IsolatedTarget) {
  CallGraph g;
  g.add_node("solo");
  EXPECT_EQ(build_sequence(g, "solo", {}).ids(), (Ids{"solo"}));
}

TEST(BuildSequence, UnknownTarget) {
  CallGraph g;
  try {
    build_sequence(g, "nope", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownFunction);
  }
}

TEST(BuildSequence, TiesBrokenById) {
  CallGraph g;
  for (auto id : {"t", "z", "a", "m"}) g.add_node(id);
  g.add_edge("t", "z");
  g.add_edge("t", "a");
  g.add_edge("t", "m");
  auto seq = build_sequence(g, "t", uniform_scores({{"z", 0.7}, {"a", 0.7}, {"m", 0.9}}));
  EXPECT_EQ(seq.ids(), (Ids{"m", "a", "z", "t"}));
}

TEST(SequenceCheck, RejectsViolations) {
  OptimizingFunctionSequence s;
  s.entries = {{"t", Role::Target, RelevanceScore::uniform(1)}, {"c", Role::Callee, RelevanceScore::uniform(0.9)}};
  EXPECT_THROW(s.check(0.5), std::logic_error);
  s.entries = {{"c", Role::Callee, RelevanceScore::uniform(0.4)}, {"t", Role::Target, RelevanceScore::uniform(1)}};
  EXPECT_THROW(s.check(0.5), std::logic_error);
}

struct RandomCase {
  CallGraph graph;
  std::string target;
  std::map<std::string, RelevanceScore> scores;
};

RandomCase random_case(std::mt19937& rng) {
  RandomCase c;
  int n = 2 + static_cast<int>(rng() % 10);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < n; ++i) c.graph.add_node("n" + std::to_string(i));
  int m = static_cast<int>(rng() % (2 * n));
  for (int k = 0; k < m; ++k)
    c.graph.add_edge("n" + std::to_string(rng() % n), "n" + std::to_string(rng() % n));
  c.target = "n" + std::to_string(rng() % n);
  for (int i = 0; i < n; ++i) {
    // Quantized so ties happen.
    double v = std::round(u(rng) * 10) / 10;
    c.scores["n" + std::to_string(i)] = RelevanceScore::uniform(v);
  }
  return c;
}

bool is_subsequence(const Ids& small, const Ids& big) {
  std::size_t j = 0;
  for (auto& s : big)
    if (j < small.size() && small[j] == s) ++j;
  return j == small.size();
}

TEST(SequenceProperty, ThresholdMonotonicityAffineInvarianceRoleOrder) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto c = random_case(rng);
    double t1 = std::round(std::uniform_real_distribution<double>(0, 1)(rng) * 10) / 10;
    double t2 = t1 + 0.2;
    auto s1 = build_sequence(c.graph, c.target, c.scores, {t1});
    auto s2 = build_sequence(c.graph, c.target, c.scores, {t2});
    ASSERT_NO_THROW(s1.check(t1));
    ASSERT_NO_THROW(s2.check(t2));
    EXPECT_LE(s2.entries.size(), s1.entries.size());
    EXPECT_TRUE(is_subsequence(s2.ids(), s1.ids()));

    // Positive affine map applied to scores and threshold alike.
    double a = 0.5, b = 0.25;
    auto scaled = c.scores;
    for (auto& [id, s] : scaled) s = RelevanceScore::uniform(a * s.combined + b);
    auto s3 = build_sequence(c.graph, c.target, scaled, {a * t1 + b});
    EXPECT_EQ(s3.ids(), s1.ids());
  }
}

TEST(SequenceProperty, FallbackScorerIsPure) {
  auto corpus = load_corpus_dir(PEACE_SOURCE_DIR "/tests/fixtures/toy");
  auto g = build_call_graph(corpus);
  FallbackDependencyScorer dep(&g);
  HashingEmbedder emb;
  RelevanceScorer scorer(dep, emb);
  auto a = plan_sequence(corpus, g, "mod.f_t", scorer).to_json().dump();
  auto b = plan_sequence(corpus, g, "mod.f_t", scorer).to_json().dump();
  EXPECT_EQ(a, b);
}

TEST(RelevanceScorer, FallsBackWhenModelScorerUnavailable) {
  ScriptedProvider p;  // exhausted immediately
  ModelDependencyScorer model(p, {}, {0, std::chrono::milliseconds(0)});
  FallbackDependencyScorer fallback;
  TableEmbedder emb(1, {{"x", {1}}, {"y", {1}}});
  RelevanceScorer scorer(model, emb, {}, &fallback);
  auto s = scorer.score({"a", "x"}, {{"b", "y"}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].semantic, 1.0);
  EXPECT_DOUBLE_EQ(s[0].combined, 0.5 * s[0].dependency + 0.5);
}

}  // namespace
}  // namespace peace
