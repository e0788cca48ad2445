#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/call_graph.hpp"
#include "peace/model_gateway.hpp"
#include "peace/prompts.hpp"

namespace peace {

struct RelevanceScore {
  double dependency = 0;
  double semantic = 0;
  double combined = 0;

  static RelevanceScore uniform(double v) { return {v, v, v}; }
  nlohmann::json to_json() const;
  static RelevanceScore from_json(const nlohmann::json& j);
};

// Anything that can be scored against an anchor: a function, or a historical
// edit rendered as text.
struct Subject {
  std::string id;
  std::string text;
};

class DependencyScorer {
 public:
  virtual ~DependencyScorer() = default;
  // Raw score; callers clamp. Throws Error{ScorerUnavailable}.
  virtual double score(const Subject& a, const Subject& b) = 0;
  virtual std::string name() const = 0;
};

// 0.5 * [a calls b or b calls a] + 0.5 * Jaccard(identifiers(a), identifiers(b)).
// Without a graph the edge term is always zero.
class FallbackDependencyScorer : public DependencyScorer {
 public:
  explicit FallbackDependencyScorer(const CallGraph* graph = nullptr) : graph_(graph) {}
  double score(const Subject& a, const Subject& b) override;
  std::string name() const override { return "fallback"; }

 private:
  const CallGraph* graph_;
};

// Asks a chat model for a number in [0,1].
class ModelDependencyScorer : public DependencyScorer {
 public:
  ModelDependencyScorer(ChatProvider& provider, ModelParams params, RetryPolicy retry = {},
                        InteractionLog* log = nullptr,
                        const PromptLibrary& prompts = PromptLibrary::builtin());
  double score(const Subject& a, const Subject& b) override;
  std::string name() const override { return "model:" + provider_.name(); }

 private:
  ChatProvider& provider_;
  ModelParams params_;
  RetryPolicy retry_;
  InteractionLog* log_;
  const PromptLibrary& prompts_;
};

// Fixed scores keyed by the id of the second subject.
class TableDependencyScorer : public DependencyScorer {
 public:
  explicit TableDependencyScorer(std::map<std::string, double> table) : table_(std::move(table)) {}
  double score(const Subject& a, const Subject& b) override;
  std::string name() const override { return "table"; }

 private:
  std::map<std::string, double> table_;
};

double dependency_score(const Subject& a, const Subject& b, DependencyScorer& scorer);
// (cos+1)/2, or the raw cosine clamped at 0 when the embedder is non-negative.
double semantic_score(const Subject& a, const Subject& b, Embedder& embedder);
double semantic_from_cosine(double cos, bool non_negative);
// w * dep + (1 - w) * sem.
double combine(double dep, double sem, double dependency_weight = 0.5);

struct ScoringOptions {
  double dependency_weight = 0.5;
  // When the primary dependency scorer is unavailable, use the fallback
  // scorer instead of failing.
  bool fallback_on_unavailable = true;
};

// Scores every subject against the anchor. Semantic embeddings are computed
// in one batch. Throws Error{ScorerUnavailable} / Error{EmbedderUnavailable}.
class RelevanceScorer {
 public:
  RelevanceScorer(DependencyScorer& dependency, Embedder& embedder, ScoringOptions options = {},
                  DependencyScorer* fallback = nullptr);
  virtual ~RelevanceScorer() = default;
  virtual std::vector<RelevanceScore> score(const Subject& anchor, const std::vector<Subject>& others);

 protected:
  RelevanceScorer() = default;

 private:
  DependencyScorer* dependency_ = nullptr;
  Embedder* embedder_ = nullptr;
  ScoringOptions options_;
  DependencyScorer* fallback_ = nullptr;
};

// Returns scripted combined scores by subject id; unknown ids score 0.
class TableRelevanceScorer : public RelevanceScorer {
 public:
  explicit TableRelevanceScorer(std::map<std::string, double> combined) : table_(std::move(combined)) {}
  std::vector<RelevanceScore> score(const Subject& anchor, const std::vector<Subject>& others) override;

 private:
  std::map<std::string, double> table_;
};

enum class Role { Callee, Target, Caller };
std::string to_string(Role role);

struct SequenceEntry {
  std::string id;
  Role role = Role::Target;
  RelevanceScore score;
};

struct OptimizingFunctionSequence {
  std::vector<SequenceEntry> entries;

  std::vector<std::string> ids() const;
  nlohmann::json to_json() const;
  static OptimizingFunctionSequence from_json(const nlohmann::json& j);
  // Throws std::logic_error when the role, order or threshold invariants fail.
  void check(double threshold) const;
};

struct SequenceOptions {
  double threshold = 0.5;
  std::size_t depth = kUnboundedDepth;
};

// Candidates are the callers and callees of the target; a function reachable
// both ways is treated as a callee. Candidates without a score are dropped.
OptimizingFunctionSequence build_sequence(const CallGraph& graph, const std::string& target_id,
                                          const std::map<std::string, RelevanceScore>& scores,
                                          const SequenceOptions& options = {});

// Collects candidates, scores them against the target and builds the sequence.
OptimizingFunctionSequence plan_sequence(const Corpus& corpus, const CallGraph& graph,
                                         const std::string& target_id, RelevanceScorer& scorer,
                                         const SequenceOptions& options = {});

}  // namespace peace
