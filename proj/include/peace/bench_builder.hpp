#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peace/call_graph.hpp"
#include "peace/edit_history.hpp"
#include "peace/model_gateway.hpp"
#include "peace/prompts.hpp"

namespace peace {

std::vector<std::string> default_efficiency_keywords();

struct FilterConfig {
  std::vector<std::string> keywords = default_efficiency_keywords();
  std::size_t min_lines = 5;
  std::size_t max_lines = 150;
  std::size_t max_files = 4;
  std::size_t commit_window = kDefaultCommitWindow;
  // A message passes when its TF-IDF keyword score exceeds this; 0 keeps any
  // message with at least one keyword hit.
  double score_threshold = 0.0;

  // Throws Error{ConfigInvalid}.
  void validate() const;
};

// Lowercase, strip one inflectional suffix (longest first, keeping at least
// three letters), then a trailing 'e'. "optimization", "optimized" and
// "optimize" share a stem; so do "faster" and "fast".
std::string stem(std::string_view word);

// Lowercased alphanumeric runs.
std::vector<std::string> message_tokens(std::string_view message);

// Per-commit score: sum over keyword stems present in the message of
// (occurrences / message tokens) * idf, where idf = ln((1 + N) / (1 + df)) + 1
// over the N messages given. Deterministic.
std::vector<double> keyword_scores(const std::vector<CommitRecord>& commits, const FilterConfig& config);

std::vector<CommitRecord> keyword_filter(const std::vector<CommitRecord>& commits, const FilterConfig& config);
bool within_size_bounds(const CommitRecord& commit, const FilterConfig& config);
std::vector<CommitRecord> size_filter(const std::vector<CommitRecord>& commits, const FilterConfig& config);

struct Verdict {
  bool relevant = false;
  double score = 0;
  std::string rationale;

  nlohmann::json to_json() const;
};

// Asks the model whether the commit is an execution-speed optimization.
// Throws Error{ModelFailure} when the model fails or the reply has no verdict.
Verdict semantic_confirm(const CommitRecord& commit, ChatProvider& model, const RetryPolicy& retry = {},
                         InteractionLog* log = nullptr, const PromptLibrary& prompts = PromptLibrary::builtin());

struct FilterReport {
  std::size_t mined = 0;
  std::vector<std::string> keyword_kept;  // shas, in input order
  std::vector<std::string> size_kept;
  std::vector<std::string> confirmed;
  std::vector<std::string> needs_review;  // model failures, not dropped silently
  std::vector<std::pair<std::string, Verdict>> verdicts;

  nlohmann::json to_json() const;
};

// keyword -> size -> semantic confirmation. Each stage keeps a subset of the
// previous one, in input order. Returns the confirmed commits.
std::vector<CommitRecord> run_filter_chain(const std::vector<CommitRecord>& commits, const FilterConfig& config,
                                           ChatProvider& model, FilterReport& report, const RetryPolicy& retry = {},
                                           InteractionLog* log = nullptr,
                                           const PromptLibrary& prompts = PromptLibrary::builtin());

// Test files: test_*.py, *_test.py, or anything under a tests/ or test/ dir.
bool is_test_path(std::string_view path);
bool is_test_function(const FunctionRecord& fn);
// pytest node id: path::[Class::]name
std::string test_node_id(const FunctionRecord& fn);

// Tests with added lines in the commit (file order), then other tests whose
// call graph reaches the target (by id). Throws Error{NoTests}.
std::vector<std::string> extract_test_cases(const CommitRecord& commit, const Corpus& after,
                                            const std::string& target_id);

// Non-test function with the most changed lines in the commit that exists at
// the base revision; ties by overlap with message terms, then id.
std::optional<std::string> default_target(const CommitRecord& commit, const Corpus& before, const Corpus& after);

inline constexpr int kBundleSchemaVersion = 1;

struct TaskBundle {
  std::string id;
  std::string target_function;
  std::string target_body;
  std::optional<std::string> task_prompt;  // nullopt: generic instruction
  std::string source_commit;
  std::string base_revision;
  nlohmann::json environment;  // declarative container spec
  std::vector<std::string> tests;
  std::string ground_truth_diff;  // unified diff against project/
  std::vector<EditRecord> history;

  // Bundle layout, relative to its directory.
  static constexpr const char* kManifest = "manifest.json";
  static constexpr const char* kHistory = "history.json";
  static constexpr const char* kTests = "tests.json";
  static constexpr const char* kEnvironment = "environment.json";
  static constexpr const char* kGroundTruth = "ground_truth.diff";
  static constexpr const char* kProject = "project";

  nlohmann::json manifest() const;
};

nlohmann::json default_environment();

// Writes the metadata files (not the project snapshot). Every file is
// written atomically.
void save_bundle(const TaskBundle& bundle, const std::filesystem::path& dir);
// Throws Error{SchemaViolation} on missing or malformed parts.
TaskBundle load_bundle(const std::filesystem::path& dir);
// Loads, then checks: tests nonempty, target defined in project/ with the
// recorded body, the ground truth applies cleanly. Throws Error{SchemaViolation}.
TaskBundle validate_bundle(const std::filesystem::path& dir);

struct BundleSelections {
  std::optional<std::string> target;       // manual override
  std::optional<std::string> task_prompt;  // manual override
  bool task_prompt_from_message = true;    // else generic instruction
  nlohmann::json environment = default_environment();
};

// Snapshot of the parent revision with the commit's test files overlaid,
// ground truth restricted to non-test files, history mined up to the parent.
TaskBundle emit_task_bundle(const util::Git& git, const CommitRecord& commit, const BundleSelections& selections,
                            const FilterConfig& config, const std::filesystem::path& out_dir);

struct BenchReport {
  FilterReport filters;
  std::vector<std::string> bundles;                           // bundle dirs
  std::vector<std::pair<std::string, std::string>> rejected;  // sha, reason

  nlohmann::json to_json() const;
};

// Mines the window, runs the filter chain and emits one bundle per surviving
// commit under out_dir/<short sha>.
BenchReport build_bench(const util::Git& git, const FilterConfig& config, ChatProvider& model,
                        const std::filesystem::path& out_dir, const BundleSelections& selections = {},
                        InteractionLog* log = nullptr, const PromptLibrary& prompts = PromptLibrary::builtin());

}  // namespace peace
