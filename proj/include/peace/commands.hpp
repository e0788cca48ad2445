#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "peace/bench_builder.hpp"
#include "peace/config.hpp"
#include "peace/edit_agent.hpp"
#include "peace/error.hpp"
#include "peace/eval_harness.hpp"
#include "peace/knowledge_store.hpp"
#include "peace/optimize_pipeline.hpp"
#include "peace/relevance.hpp"

namespace peace {

// Process exit status per error family.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitConfig = 3,       // ConfigInvalid, missing inputs named on the command line
  kExitInput = 4,        // repository, corpus, bundle or artifact problems
  kExitModel = 5,        // providers, scorers, unusable model output
  kExitEnvironment = 6,  // sandbox, patch application, timeouts, probe
  kExitMetric = 7,       // metric preconditions
};
int exit_code_for(ErrorCode code);

// Config plus the things built from it on demand.
class Session {
 public:
  explicit Session(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  PipelineConfig& mutable_config() { return config_; }
  const PromptLibrary& prompts() const { return prompts_; }
  ProviderSet& providers();
  InteractionLog& log() { return log_; }

  // Model-backed unless configured as "fallback"; falls back on failure.
  std::unique_ptr<RelevanceScorer> relevance_scorer(const CallGraph* graph);

 private:
  PipelineConfig config_;
  PromptLibrary prompts_;
  std::unique_ptr<ProviderSet> providers_;
  InteractionLog log_;
  std::vector<std::unique_ptr<DependencyScorer>> scorers_;
};

// Scores from a {"<id>": <combined score>} file replace the scorer.
std::map<std::string, double> load_score_table(const std::filesystem::path& path);

OptimizingFunctionSequence plan(Session& session, const Corpus& corpus, const std::string& target,
                                const std::optional<std::map<std::string, double>>& score_table = std::nullopt);

AgentResult find_valid_edits(Session& session, const Corpus& corpus, const std::string& function_id,
                             const std::vector<EditRecord>& history);

// Loads the configured index when it exists, adds the configured external
// snippets, then the corpus functions as internal snippets.
KnowledgeIndex build_knowledge(Session& session, const Corpus& corpus);

struct OptimizeOutput {
  std::string target;
  OptimizingFunctionSequence sequence;
  RunResult run;
  FileMap original;
  IndexStats knowledge;
  std::optional<TestOutcome> validation;  // bundle runs with validation enabled

  std::string diff() const { return files_diff(original, run.files); }
  nlohmann::json report() const;
};

OptimizeOutput optimize_project(Session& session, const FileMap& files, const std::string& target,
                                std::vector<EditRecord> history, const std::optional<std::string>& task_prompt,
                                const std::string& base_revision = {}, const StepGate& gate = {});
// Runs the bundle's tests on `files` laid over its project, without counting.
TestOutcome test_files(const std::filesystem::path& bundle_dir, const TaskBundle& bundle, const FileMap& files,
                       const EvalConfig& config);

// With validation enabled the bundle's tests run on the result, and, per
// function, after every applied edit.
OptimizeOutput optimize_bundle(Session& session, const std::filesystem::path& bundle_dir,
                               const std::optional<std::string>& target = std::nullopt, const StepGate& gate = {});

// patch.json, patch.diff, report.json under out_dir, each written atomically.
void write_optimize_artifacts(const OptimizeOutput& out, const std::filesystem::path& out_dir);

std::unique_ptr<Probe> make_probe(const PipelineConfig& config);

// Measures the method (patch) and ground truth variants of one bundle, plus
// the baseline variant when `baseline_patch` is given, and aggregates with
// any baseline records supplied.
EvalReport evaluate_bundle(Session& session, const std::filesystem::path& bundle_dir, const ProjectPatch& patch,
                           std::vector<MeasurementRecord> baseline, const std::optional<ProjectPatch>& baseline_patch,
                           Probe& probe);

}  // namespace peace
